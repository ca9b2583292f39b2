#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ash/attention.hpp"
#include "ash/dataset.hpp"
#include "ash/gradcheck.hpp"
#include "ash/index.hpp"
#include "ash/layers.hpp"
#include "ash/loss.hpp"
#include "ash/metrics.hpp"
#include "ash/model.hpp"
#include "ash/training.hpp"

namespace fs = std::filesystem;
using namespace ash;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitDiverged = 4;

// Relative dataset paths resolve under ASH_DATA_ROOT when it is set.
fs::path data_path(const std::string& p) {
    const char* root = std::getenv("ASH_DATA_ROOT");
    fs::path path(p);
    if (root && *root && path.is_relative()) return fs::path(root) / path;
    return path;
}

Arch parse_arch(const std::string& s) {
    if (s == "u" || s == "U") return Arch::U;
    if (s == "l" || s == "L") return Arch::L;
    throw DataError("unknown arch '" + s + "' (expected u or l)");
}

Head parse_head(const std::string& s) {
    if (s == "sigmoid") return Head::Sigmoid;
    if (s == "relu") return Head::Relu;
    if (s == "linear") return Head::Linear;
    throw DataError("unknown head activation '" + s + "'");
}

DistanceMode parse_distance(const std::string& s) {
    if (s == "squared-l2") return DistanceMode::SquaredL2;
    if (s == "l2") return DistanceMode::L2;
    throw DataError("unknown distance mode '" + s + "'");
}

IndexMode parse_index_mode(const std::string& s) {
    if (s == "l2") return IndexMode::L2;
    if (s == "hamming") return IndexMode::Hamming;
    throw DataError("unknown index mode '" + s + "'");
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw DataError("bad integer '" + item + "' in list '" + s + "'");
        }
    }
    if (out.empty()) throw DataError("empty integer list '" + s + "'");
    return out;
}

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw DataError("bad number '" + item + "' in list '" + s + "'");
        }
    }
    if (out.empty()) throw DataError("empty number list '" + s + "'");
    return out;
}

// ---- training settings: config file overridden by flags ----

struct TrainSettings {
    std::string arch = "u";
    int k = 12;
    double r = 0.5;
    double lr = 0.01;
    int epochs = 50;
    int batch = 10;
    std::uint64_t seed = 7;
    std::string data;
    std::string out = "model.ash";
    bool attention = true;
    std::string head = "sigmoid";
    std::string distance = "squared-l2";
    std::string widths;
    double similar_fraction = 0.5;
    int lr_decay_epoch = 40;
    double lr_decay_factor = 0.1;
    std::string history;
};

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
    if (v == "off" || v == "false" || v == "0" || v == "no") return false;
    throw DataError("config key '" + key + "' wants on/off, got '" + v + "'");
}

void load_train_config(const fs::path& path, TrainSettings& s) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open config file: " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const auto eq = line.find('=');
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        if (eq == std::string::npos) {
            throw DataError(path.string() + ":" + std::to_string(lineno) +
                            ": expected 'key = value'");
        }
        auto trim = [](std::string v) {
            const auto b = v.find_first_not_of(" \t");
            const auto e = v.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "arch") s.arch = value;
        else if (key == "k") s.k = std::stoi(value);
        else if (key == "r") s.r = std::stod(value);
        else if (key == "lr") s.lr = std::stod(value);
        else if (key == "epochs") s.epochs = std::stoi(value);
        else if (key == "batch") s.batch = std::stoi(value);
        else if (key == "seed") s.seed = std::stoull(value);
        else if (key == "data") s.data = value;
        else if (key == "out") s.out = value;
        else if (key == "attention") s.attention = parse_bool(value, key);
        else if (key == "head") s.head = value;
        else if (key == "distance") s.distance = value;
        else if (key == "widths") s.widths = value;
        else if (key == "similar_fraction") s.similar_fraction = std::stod(value);
        else if (key == "lr_decay_epoch") s.lr_decay_epoch = std::stoi(value);
        else if (key == "lr_decay_factor") s.lr_decay_factor = std::stod(value);
        else if (key == "history") s.history = value;
        else {
            throw DataError(path.string() + ":" + std::to_string(lineno) +
                            ": unknown config key '" + key + "'");
        }
    }
}

AshConfig model_config(const TrainSettings& s, int channels, int height, int width) {
    AshConfig cfg;
    cfg.arch = parse_arch(s.arch);
    cfg.k = s.k;
    cfg.in_channels = channels;
    cfg.in_h = height;
    cfg.in_w = width;
    if (!s.widths.empty()) cfg.widths = parse_int_list(s.widths);
    cfg.head = parse_head(s.head);
    cfg.attention = s.attention;
    cfg.seed = s.seed;
    return cfg;
}

void print_warnings(const AshConfig& cfg) {
    for (const auto& w : cfg.warnings()) std::cerr << "warning: " << w << "\n";
}

int run_train(const TrainSettings& s) {
    if (s.data.empty()) throw DataError("train needs a data manifest (data = ... or --data)");
    const auto samples = load_dataset(data_path(s.data));
    const auto& first = samples.front();
    const auto cfg = model_config(s, first.channels, first.height, first.width);
    print_warnings(cfg);

    HashModel model(cfg);
    SgdMomentum<float> opt(s.lr);
    TrainPlan plan;
    plan.epochs = s.epochs;
    plan.batch_size = s.batch;
    plan.seed = s.seed;
    plan.similar_fraction = s.similar_fraction;
    plan.lr_decay_epoch = s.lr_decay_epoch;
    plan.lr_decay_factor = s.lr_decay_factor;
    plan.verbose = true;
    LossConfig loss_cfg;
    loss_cfg.r = s.r;
    loss_cfg.k = s.k;
    loss_cfg.distance = parse_distance(s.distance);

    const auto result = train(model, samples, plan, loss_cfg, opt);
    save_checkpoint(model, s.out);

    const std::string history = s.history.empty() ? s.out + ".loss.csv" : s.history;
    std::ofstream os(history, std::ios::binary);
    if (!os) throw IoError("cannot write loss history: " + history);
    os << "epoch,mean_loss\n";
    os.precision(12);
    for (std::size_t i = 0; i < result.epoch_loss.size(); ++i) {
        os << (i + 1) << ',' << result.epoch_loss[i] << '\n';
    }

    std::cout << "trained " << s.epochs << " epochs x " << result.iterations_per_epoch
              << " iterations; first-epoch loss " << result.epoch_loss.front()
              << ", final-epoch loss " << result.epoch_loss.back() << "\n";
    std::cout << "checkpoint: " << s.out << "\nloss history: " << history << "\n";
    return kExitOk;
}

// ---- encoding ----

HashModel model_from_checkpoint(const fs::path& checkpoint, const std::string& widths,
                                const std::string& head, bool attention) {
    const auto info = read_checkpoint_info(checkpoint);
    AshConfig cfg;
    cfg.arch = info.arch;
    cfg.k = info.k;
    cfg.in_channels = info.in_channels;
    cfg.in_h = info.in_h;
    cfg.in_w = info.in_w;
    if (!widths.empty()) cfg.widths = parse_int_list(widths);
    cfg.head = parse_head(head);
    cfg.attention = attention;
    HashModel model(cfg);
    load_checkpoint(model, checkpoint);
    return model;
}

Tensor encode_all(HashModel& model, const std::vector<ImageSample>& samples) {
    const int k = model.config().k;
    std::vector<float> values;
    values.reserve(samples.size() * static_cast<std::size_t>(k));
    constexpr std::size_t kChunk = 64;
    for (std::size_t begin = 0; begin < samples.size(); begin += kChunk) {
        const std::size_t end = std::min(samples.size(), begin + kChunk);
        const std::vector<ImageSample> chunk(samples.begin() + begin, samples.begin() + end);
        const auto codes = encode_batch(model, to_batch(chunk));
        values.insert(values.end(), codes.values().begin(), codes.values().end());
    }
    return Tensor::from({static_cast<std::int64_t>(samples.size()), k}, std::move(values));
}

std::vector<HashRecord> make_records(const std::vector<ImageSample>& samples,
                                     const Tensor& embeddings,
                                     const std::vector<float>& thresholds,
                                     std::uint64_t id_base) {
    const std::int64_t k = embeddings.shape[1];
    std::vector<HashRecord> records;
    records.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        HashRecord r;
        r.id = id_base + i;
        r.label = static_cast<std::uint32_t>(samples[i].label);
        r.embedding.assign(embeddings.values().begin() + static_cast<std::int64_t>(i) * k,
                           embeddings.values().begin() + static_cast<std::int64_t>(i + 1) * k);
        r.code = binarize(r.embedding, thresholds);
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<float> read_threshold_file(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open thresholds file: " + path.string());
    std::vector<float> taus;
    double v;
    while (is >> v) taus.push_back(static_cast<float>(v));
    if (taus.empty()) throw DataError("thresholds file is empty: " + path.string());
    return taus;
}

int run_encode(const std::string& checkpoint, const std::string& manifest,
               const std::string& out, std::uint64_t id_base, const std::string& widths,
               const std::string& head, bool attention, const std::string& thresholds_file,
               const std::string& save_thresholds) {
    auto model = model_from_checkpoint(checkpoint, widths, head, attention);
    const auto samples = load_dataset(data_path(manifest));
    const auto embeddings = encode_all(model, samples);
    const std::vector<float> thresholds =
        thresholds_file.empty() ? default_thresholds(model.config().head, embeddings)
                                : read_threshold_file(data_path(thresholds_file));
    const auto records = make_records(samples, embeddings, thresholds, id_base);
    write_codes_file(out, records, model.config().k);
    if (!save_thresholds.empty()) {
        std::ofstream os(save_thresholds, std::ios::binary);
        if (!os) throw IoError("cannot write thresholds: " + save_thresholds);
        os.precision(9);
        for (const float t : thresholds) os << t << '\n';
    }
    std::cout << "encoded " << records.size() << " images at K=" << model.config().k << " into "
              << out << "\n";
    return kExitOk;
}

int run_query(const std::string& codes, const std::string& checkpoint, const std::string& image,
              int topk, const std::string& mode_name, const std::string& widths,
              const std::string& head, bool attention, const std::string& thresholds_file) {
    const auto [k, records] = read_codes_file(data_path(codes));
    const auto mode = parse_index_mode(mode_name);
    const auto index = CodeIndex::build(records, mode);

    auto model = model_from_checkpoint(checkpoint, widths, head, attention);
    if (model.config().k != k) {
        throw DataError("checkpoint K does not match codes file K");
    }
    const auto sample = read_image(data_path(image), 0, 0);
    const auto embedding_mat = encode_all(model, {sample});
    std::vector<float> embedding = embedding_mat.values();

    std::vector<std::pair<std::uint64_t, double>> results;
    if (mode == IndexMode::L2) {
        results = index.query_topk(embedding, topk);
    } else {
        std::vector<float> thresholds;
        if (!thresholds_file.empty()) {
            thresholds = read_threshold_file(data_path(thresholds_file));
        } else if (model.config().head == Head::Sigmoid) {
            thresholds = uniform_thresholds(k);
        } else {
            throw DataError(
                "hamming queries with a non-sigmoid head need --thresholds from encoding");
        }
        results = index.query_topk(binarize(embedding, thresholds), topk);
    }

    std::cout << std::left << std::setw(6) << "rank" << std::setw(10) << "id" << std::setw(7)
              << "label" << "distance\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
        std::cout << std::left << std::setw(6) << i + 1 << std::setw(10) << results[i].first
                  << std::setw(7) << index.label_of(results[i].first) << results[i].second
                  << "\n";
    }
    return kExitOk;
}

int run_eval(const std::string& gallery_file, const std::string& queries_file, int k,
             const std::string& mode_name, const std::string& norm_name,
             const std::string& csv) {
    const auto [gk, gallery] = read_codes_file(data_path(gallery_file));
    const auto [qk, queries] = read_codes_file(data_path(queries_file));
    if (gk != qk) throw DataError("gallery and query code lengths differ");
    const auto index = CodeIndex::build(gallery, parse_index_mode(mode_name));
    ApNorm norm;
    if (norm_name == "relevant") {
        norm = ApNorm::RelevantRetrieved;
    } else if (norm_name == "min-k-total") {
        norm = ApNorm::MinKTotalRelevant;
    } else {
        throw DataError("unknown AP normalization '" + norm_name + "'");
    }
    const auto report = evaluate(index, queries, k, norm);
    std::cout << report_table(report) << "\n" << report_keyvalues(report);
    if (!csv.empty()) write_report_csv(csv, report);
    return kExitOk;
}

// ---- sweep ----

int run_sweep(const TrainSettings& base, const std::string& query_manifest,
              const std::vector<double>& rs, const std::vector<int>& ks, int topk,
              const std::string& out_csv) {
    const auto gallery_samples = load_dataset(data_path(base.data));
    const auto query_samples = load_dataset(data_path(query_manifest));
    const auto& first = gallery_samples.front();

    std::ofstream os(out_csv, std::ios::binary);
    if (!os) throw IoError("cannot write sweep csv: " + out_csv);
    os << "r,k,map\n";
    os.precision(12);

    std::map<std::pair<double, int>, double> table;
    for (const double r : rs) {
        for (const int k : ks) {
            TrainSettings s = base;
            s.r = r;
            s.k = k;
            const auto cfg = model_config(s, first.channels, first.height, first.width);
            HashModel model(cfg);
            SgdMomentum<float> opt(s.lr);
            TrainPlan plan;
            plan.epochs = s.epochs;
            plan.batch_size = s.batch;
            plan.seed = s.seed;
            plan.similar_fraction = s.similar_fraction;
            plan.lr_decay_epoch = s.lr_decay_epoch;
            plan.lr_decay_factor = s.lr_decay_factor;
            LossConfig loss_cfg;
            loss_cfg.r = r;
            loss_cfg.k = k;
            loss_cfg.distance = parse_distance(s.distance);
            std::cerr << "sweep: training r=" << r << " k=" << k << "\n";
            train(model, gallery_samples, plan, loss_cfg, opt);

            const auto gallery_embeds = encode_all(model, gallery_samples);
            const auto thresholds = default_thresholds(cfg.head, gallery_embeds);
            const auto gallery_records =
                make_records(gallery_samples, gallery_embeds, thresholds, 0);
            const auto query_embeds = encode_all(model, query_samples);
            const auto query_records =
                make_records(query_samples, query_embeds, thresholds, 1u << 24);

            const auto index = CodeIndex::build(gallery_records, IndexMode::L2);
            const auto report = evaluate(index, query_records, topk);
            table[{r, k}] = report.map;
            os << r << ',' << k << ',' << report.map << '\n';
            os.flush();
        }
    }

    std::cout << "mAP@" << topk << " over r x K\n";
    std::cout << "r\\K   ";
    for (const int k : ks) std::cout << "  K=" << k << "   ";
    std::cout << "\n";
    std::cout.precision(4);
    std::cout << std::fixed;
    for (const double r : rs) {
        std::cout << r << "  ";
        for (const int k : ks) std::cout << " " << table[{r, k}] << " ";
        std::cout << "\n";
    }
    std::cout << "sweep csv: " << out_csv << "\n";
    return kExitOk;
}

// ---- selftest ----

struct SelfTest {
    int failures = 0;

    void check(const std::string& name, bool ok) {
        std::cout << (ok ? "ok   " : "FAIL ") << name << "\n";
        if (!ok) ++failures;
    }
    void near(const std::string& name, double got, double want, double tol) {
        check(name, std::abs(got - want) <= tol);
    }
};

int run_selftest() {
    SelfTest t;

    t.near("sigmoid(0)", sigmoid(Tensor::from({1}, {0.f})).item(), 0.5, 1e-9);
    t.near("sigmoid(1)", sigmoid(Tensor::from({1}, {1.f})).item(), 0.731059, 1e-6);
    t.check("relu", relu(Tensor::from({3}, {-1.f, 0.f, 2.f})).values() ==
                        std::vector<float>{0.f, 0.f, 2.f});
    t.check("elementwise mul",
            mul(Tensor::from({3}, {1.f, -2.f, 3.f}), Tensor::from({3}, {2.f, 2.f, 2.f})).values() ==
                std::vector<float>{2.f, -4.f, 6.f});
    t.check("matmul", matmul(Tensor::from({2, 2}, {1, 2, 3, 4}), Tensor::from({2, 1}, {1, 1}))
                              .values() == std::vector<float>{3.f, 7.f});

    const auto conv = conv2d(Tensor::ones({1, 1, 3, 3}), Tensor::ones({1, 1, 3, 3}),
                             Tensor::zeros({1}), 1, 1);
    t.check("conv overlap counts",
            conv.values() == std::vector<float>{4, 6, 4, 6, 9, 6, 4, 6, 4});

    std::vector<float> ramp(16);
    for (int i = 0; i < 16; ++i) ramp[i] = static_cast<float>(i + 1);
    t.check("max pool", pool2d(PoolKind::Max, Tensor::from({1, 1, 4, 4}, ramp)).values() ==
                            std::vector<float>{6, 8, 14, 16});
    t.near("avg pool", pool2d(PoolKind::Avg, Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4}), 2, 2, 0)
                           .item(),
           2.5, 1e-7);

    const auto cr = Tensor::from({1, 2, 1, 1}, {2.f, -2.f});
    t.check("channel max", channel_reduce(ReduceKind::Max, cr).item() == 2.f);
    t.check("channel mean", channel_reduce(ReduceKind::Mean, cr).item() == 0.f);

    const auto att = spatial_attention(cr);
    t.near("attention (2,-2) pixel", att.values()[0], 1.0, 1e-6);
    t.near("attention all-ones", spatial_attention(Tensor::ones({1, 2, 2, 2})).values()[0],
           0.731059, 1e-6);

    BatchNormT<float> bn(1);
    const auto bn_out = bn.forward(Tensor::from({2, 1, 1, 1}, {1.f, 3.f}), nullptr, true);
    t.near("batchnorm (1,3)", bn_out.values()[1], 0.999995, 1e-6);

    LossConfig lc;
    lc.k = 12;
    lc.r = 0.5;
    std::vector<float> z(12, 0.f), two(12, 0.f), six(12, 0.f);
    two[0] = two[1] = 1.f;
    for (int i = 0; i < 6; ++i) six[i] = 1.f;
    t.near("loss dissimilar D=2",
           pairwise_loss(Tensor::from({1, 12}, z), Tensor::from({1, 12}, two), {1}, lc).item(),
           2.0, 1e-7);
    t.near("loss similar D=6",
           pairwise_loss(Tensor::from({1, 12}, z), Tensor::from({1, 12}, six), {0}, lc).item(),
           3.0, 1e-7);
    t.near("loss beyond margin",
           pairwise_loss(Tensor::from({1, 12}, z), Tensor::from({1, 12}, std::vector<float>(12, 1.f)),
                         {1}, lc)
               .item(),
           0.0, 1e-9);

    t.check("hamming", hamming_distance(HashCode::from_bits({1, 0, 1, 0}),
                                        HashCode::from_bits({0, 1, 1, 0})) == 2);
    const auto code = binarize({0.9f, 0.2f, 0.5f}, uniform_thresholds(3));
    t.check("binarize", code.bit(0) && !code.bit(1) && !code.bit(2));

    t.near("hr", hr_at_k({1, 1, 0, 0, 0}, 5), 0.4, 1e-12);
    t.near("ap", ap_at_k({1, 0, 1, 0, 0}, 5), 0.833333, 1e-6);
    t.near("rr", rr_at_k({0, 1, 0}, 3), 0.5, 1e-12);

    TensorT<float> w = Tensor::from({1}, {1.f});
    w.grad = {0.1f};
    std::vector<ParamRef<float>> params{{"w", &w, true, true}};
    SgdMomentum<float> opt(0.1, 0.9, 0.001);
    opt.step(params);
    t.near("sgd momentum step", w.values()[0], 0.9899, 1e-6);

    t.check("seeded randn determinism",
            randn_seeded<float>({2, 2}, 7).values() == randn_seeded<float>({2, 2}, 7).values());

    std::cout << (t.failures == 0 ? "selftest passed\n" : "selftest FAILED\n");
    return t.failures == 0 ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"attention-gated saliency hashing: train, index, and evaluate"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate the synthetic salient-patch dataset");
    std::string gen_out = "data";
    SyntheticSpec spec;
    std::string per_class = "250";
    gen->add_option("--out", gen_out, "output directory");
    gen->add_option("--classes", spec.classes, "number of classes");
    gen->add_option("--per-class", per_class, "images per class (single value or comma list)");
    gen->add_option("--channels", spec.channels, "1 (PGM) or 3 (PPM)");
    gen->add_option("--height", spec.height, "image height");
    gen->add_option("--width", spec.width, "image width");
    gen->add_option("--smooth-radius", spec.smooth_radius, "background blur radius");
    gen->add_option("--patch", spec.patch, "salient patch side");
    gen->add_option("--delta", spec.delta, "patch contrast in (0,1)");
    gen->add_option("--seed", spec.seed, "generator seed");

    // split
    auto* split = app.add_subcommand("split", "hold out a per-class query set from a manifest");
    std::string split_manifest_path, split_gallery = "gallery.csv", split_query = "query.csv";
    double split_fraction = 0.1;
    int split_per_class = 0;
    std::uint64_t split_seed = 7;
    split->add_option("--manifest", split_manifest_path, "input manifest")->required();
    split->add_option("--out-gallery", split_gallery, "gallery manifest path");
    split->add_option("--out-query", split_query, "query manifest path");
    split->add_option("--fraction", split_fraction, "query fraction per class");
    split->add_option("--per-class", split_per_class, "exact query count per class (overrides)");
    split->add_option("--seed", split_seed, "split seed");

    // train
    auto* tr = app.add_subcommand("train", "train a hashing model on a manifest");
    std::string train_config;
    TrainSettings ts;
    tr->add_option("--config", train_config, "key = value config file");
    auto* o_arch = tr->add_option("--arch", ts.arch, "u or l");
    auto* o_k = tr->add_option("--k", ts.k, "hash bits");
    auto* o_r = tr->add_option("--r", ts.r, "margin weight in [0,1]");
    auto* o_lr = tr->add_option("--lr", ts.lr, "learning rate");
    auto* o_epochs = tr->add_option("--epochs", ts.epochs, "training epochs");
    auto* o_batch = tr->add_option("--batch", ts.batch, "pairs per batch");
    auto* o_seed = tr->add_option("--seed", ts.seed, "training seed");
    auto* o_data = tr->add_option("--data", ts.data, "training manifest");
    auto* o_out = tr->add_option("--out", ts.out, "checkpoint path");
    auto* o_att = tr->add_flag("--attention,!--no-attention", ts.attention, "spatial gate on/off");
    auto* o_head = tr->add_option("--head", ts.head, "sigmoid | relu | linear");
    auto* o_dist = tr->add_option("--distance", ts.distance, "squared-l2 | l2");
    auto* o_widths = tr->add_option("--widths", ts.widths, "stage widths, comma list");
    auto* o_simfrac = tr->add_option("--similar-fraction", ts.similar_fraction,
                                     "similar share per batch");
    auto* o_decay_e = tr->add_option("--lr-decay-epoch", ts.lr_decay_epoch,
                                     "epoch after which lr decays (0 = off)");
    auto* o_decay_f = tr->add_option("--lr-decay-factor", ts.lr_decay_factor, "decay factor");
    auto* o_history = tr->add_option("--history", ts.history, "loss history csv path");

    // encode
    auto* enc = app.add_subcommand("encode", "encode a manifest into a codes file");
    std::string enc_ckpt, enc_manifest, enc_out = "codes.ashc", enc_widths, enc_head = "sigmoid";
    std::string enc_thresholds, enc_save_thresholds;
    bool enc_attention = true;
    std::uint64_t enc_id_base = 0;
    enc->add_option("--checkpoint", enc_ckpt, "trained checkpoint")->required();
    enc->add_option("--manifest", enc_manifest, "images to encode")->required();
    enc->add_option("--out", enc_out, "codes file path");
    enc->add_option("--id-base", enc_id_base, "first record id (keep sets disjoint)");
    enc->add_option("--widths", enc_widths, "stage widths used at training time");
    enc->add_option("--head", enc_head, "head activation used at training time");
    enc->add_flag("--attention,!--no-attention", enc_attention, "spatial gate on/off");
    enc->add_option("--thresholds", enc_thresholds, "binarization thresholds file");
    enc->add_option("--save-thresholds", enc_save_thresholds, "write thresholds used");

    // query
    auto* q = app.add_subcommand("query", "top-k nearest gallery images for a probe image");
    std::string q_codes, q_ckpt, q_image, q_mode = "l2", q_widths, q_head = "sigmoid";
    std::string q_thresholds;
    bool q_attention = true;
    int q_topk = 10;
    q->add_option("--codes", q_codes, "gallery codes file")->required();
    q->add_option("--checkpoint", q_ckpt, "trained checkpoint")->required();
    q->add_option("--image", q_image, "probe image (PGM/PPM)")->required();
    q->add_option("--k", q_topk, "results to return");
    q->add_option("--mode", q_mode, "l2 | hamming");
    q->add_option("--widths", q_widths, "stage widths used at training time");
    q->add_option("--head", q_head, "head activation used at training time");
    q->add_flag("--attention,!--no-attention", q_attention, "spatial gate on/off");
    q->add_option("--thresholds", q_thresholds, "binarization thresholds file");

    // eval
    auto* ev = app.add_subcommand("eval", "score a query codes file against a gallery");
    std::string ev_gallery, ev_queries, ev_mode = "l2", ev_norm = "relevant", ev_csv;
    int ev_k = 10;
    ev->add_option("--gallery", ev_gallery, "gallery codes file")->required();
    ev->add_option("--queries", ev_queries, "query codes file")->required();
    ev->add_option("--k", ev_k, "cutoff");
    ev->add_option("--mode", ev_mode, "l2 | hamming");
    ev->add_option("--ap-norm", ev_norm, "relevant | min-k-total");
    ev->add_option("--csv", ev_csv, "optional per-query csv");

    // sweep
    auto* sw = app.add_subcommand("sweep", "grid over r and K, one training run per cell");
    TrainSettings sw_ts;
    std::string sw_queries, sw_r = "0.3,0.5,0.7", sw_k = "12,24,36,48", sw_out = "sweep.csv";
    int sw_topk = 10;
    sw->add_option("--data", sw_ts.data, "training + gallery manifest")->required();
    sw->add_option("--queries", sw_queries, "query manifest")->required();
    sw->add_option("--r", sw_r, "comma list of r values");
    sw->add_option("--k", sw_k, "comma list of code lengths");
    sw->add_option("--topk", sw_topk, "evaluation cutoff");
    sw->add_option("--out", sw_out, "sweep csv path");
    sw->add_option("--arch", sw_ts.arch, "u or l");
    sw->add_option("--lr", sw_ts.lr, "learning rate");
    sw->add_option("--epochs", sw_ts.epochs, "training epochs per cell");
    sw->add_option("--batch", sw_ts.batch, "pairs per batch");
    sw->add_option("--seed", sw_ts.seed, "seed");
    sw->add_option("--widths", sw_ts.widths, "stage widths");
    sw->add_option("--head", sw_ts.head, "head activation");
    sw->add_flag("--attention,!--no-attention", sw_ts.attention, "spatial gate on/off");
    sw->add_option("--distance", sw_ts.distance, "squared-l2 | l2");

    // gradcheck / selftest
    auto* gc = app.add_subcommand("gradcheck", "run the finite-difference gradient suite");
    auto* st = app.add_subcommand("selftest", "run the built-in analytic checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gen->parsed()) {
            spec.per_class = parse_int_list(per_class);
            gen_synthetic(spec, data_path(gen_out));
            std::cout << "wrote " << spec.total() << " images and manifest under " << gen_out
                      << "\n";
            return kExitOk;
        }
        if (split->parsed()) {
            const auto manifest = read_manifest(data_path(split_manifest_path));
            const auto result =
                split_manifest(manifest, split_fraction, split_per_class, split_seed);
            write_manifest(data_path(split_gallery), result.gallery);
            write_manifest(data_path(split_query), result.query);
            std::cout << "gallery: " << result.gallery.size() << " images -> " << split_gallery
                      << "\nquery: " << result.query.size() << " images -> " << split_query
                      << "\n";
            return kExitOk;
        }
        if (tr->parsed()) {
            TrainSettings merged;
            if (!train_config.empty()) load_train_config(train_config, merged);
            if (o_arch->count()) merged.arch = ts.arch;
            if (o_k->count()) merged.k = ts.k;
            if (o_r->count()) merged.r = ts.r;
            if (o_lr->count()) merged.lr = ts.lr;
            if (o_epochs->count()) merged.epochs = ts.epochs;
            if (o_batch->count()) merged.batch = ts.batch;
            if (o_seed->count()) merged.seed = ts.seed;
            if (o_data->count()) merged.data = ts.data;
            if (o_out->count()) merged.out = ts.out;
            if (o_att->count()) merged.attention = ts.attention;
            if (o_head->count()) merged.head = ts.head;
            if (o_dist->count()) merged.distance = ts.distance;
            if (o_widths->count()) merged.widths = ts.widths;
            if (o_simfrac->count()) merged.similar_fraction = ts.similar_fraction;
            if (o_decay_e->count()) merged.lr_decay_epoch = ts.lr_decay_epoch;
            if (o_decay_f->count()) merged.lr_decay_factor = ts.lr_decay_factor;
            if (o_history->count()) merged.history = ts.history;
            return run_train(merged);
        }
        if (enc->parsed()) {
            return run_encode(enc_ckpt, enc_manifest, enc_out, enc_id_base, enc_widths, enc_head,
                              enc_attention, enc_thresholds, enc_save_thresholds);
        }
        if (q->parsed()) {
            return run_query(q_codes, q_ckpt, q_image, q_topk, q_mode, q_widths, q_head,
                             q_attention, q_thresholds);
        }
        if (ev->parsed()) {
            return run_eval(ev_gallery, ev_queries, ev_k, ev_mode, ev_norm, ev_csv);
        }
        if (sw->parsed()) {
            return run_sweep(sw_ts, sw_queries, parse_double_list(sw_r), parse_int_list(sw_k),
                             sw_topk, sw_out);
        }
        if (gc->parsed()) {
            const double worst = run_gradient_suite(std::cout);
            return worst < 1e-4 ? kExitOk : kExitFailure;
        }
        if (st->parsed()) {
            return run_selftest();
        }
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}
