#include "ash/model.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "ash/attention.hpp"
#include "ash/layers.hpp"
#include "binio.hpp"

namespace ash {

namespace {

// Output dim of a 3x3 window at the given stride with pad 1 (floor rule).
int strided_dim(int d, int stride) { return (d + 2 - 3) / stride + 1; }

}  // namespace

std::vector<int> AshConfig::effective_widths() const {
    if (!widths.empty()) return widths;
    return arch == Arch::U ? std::vector<int>{16, 32} : std::vector<int>{16, 32, 64};
}

void AshConfig::validate() const {
    if (k < 1) throw ShapeError("hash length k must be >= 1");
    if (in_channels < 1 || in_h < 1 || in_w < 1) {
        throw ShapeError("input dims must be positive");
    }
    const auto w = effective_widths();
    const std::size_t expected = arch == Arch::U ? 2 : 3;
    if (w.size() != expected) {
        std::ostringstream os;
        os << "arch needs " << expected << " stage widths, got " << w.size();
        throw ShapeError(os.str());
    }
    for (const int x : w) {
        if (x < 1) throw ShapeError("stage widths must be positive");
    }
}

std::vector<std::string> AshConfig::warnings() const {
    std::vector<std::string> out;
    const std::int64_t m =
        static_cast<std::int64_t>(in_channels) * in_h * in_w;
    if (k >= m) {
        std::ostringstream os;
        os << "code length k=" << k << " is not small against the input dimension " << m
           << "; compact codes need k << " << m;
        out.push_back(os.str());
    }
    return out;
}

template <typename S>
struct HashModelT<S>::UStack {
    ConvLayerT<S> conv1;
    BatchNormT<S> bn1;
    ConvLayerT<S> conv2;
    BatchNormT<S> bn2;
    DenseLayerT<S> fc1, fc2;
};

template <typename S>
struct HashModelT<S>::LStack {
    ConvLayerT<S> conv_in;
    BatchNormT<S> bn_in;
    ResidualBlockT<S> block1, block2, block3;
    ConvLayerT<S> conv_out;
    BatchNormT<S> bn_out;
    DenseLayerT<S> fc1, fc2;
};

template <typename S>
HashModelT<S>::~HashModelT() = default;
template <typename S>
HashModelT<S>::HashModelT(HashModelT&&) noexcept = default;
template <typename S>
HashModelT<S>& HashModelT<S>::operator=(HashModelT&&) noexcept = default;

template <typename S>
HashModelT<S>::HashModelT(const AshConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const auto w = cfg_.effective_widths();

    auto reg = [this](const std::string& name, TensorT<S>* t, bool trainable, bool decay) {
        if (trainable) params_.push_back({name, t, true, decay});
        state_.push_back({name, t, trainable, decay});
    };
    auto reg_conv = [&](const std::string& p, ConvLayerT<S>& c) {
        reg(p + ".weight", &c.weight, true, true);
        reg(p + ".bias", &c.bias, true, false);
    };
    auto reg_bn = [&](const std::string& p, BatchNormT<S>& b) {
        reg(p + ".gamma", &b.gamma, true, false);
        reg(p + ".beta", &b.beta, true, false);
        reg(p + ".running_mean", &b.running_mean, false, false);
        reg(p + ".running_var", &b.running_var, false, false);
    };
    auto reg_dense = [&](const std::string& p, DenseLayerT<S>& d) {
        reg(p + ".weight", &d.weight, true, true);
        reg(p + ".bias", &d.bias, true, false);
    };
    auto reg_block = [&](const std::string& p, ResidualBlockT<S>& b) {
        reg_conv(p + ".conv1", b.conv1);
        reg_bn(p + ".bn1", b.bn1);
        reg_conv(p + ".conv2", b.conv2);
        reg_bn(p + ".bn2", b.bn2);
        if (b.proj) reg_conv(p + ".proj", *b.proj);
        if (b.proj_bn) reg_bn(p + ".proj_bn", *b.proj_bn);
    };

    CounterRng rng(cfg_.seed);
    if (cfg_.arch == Arch::U) {
        u_ = std::make_unique<UStack>();
        u_->conv1 = ConvLayerT<S>(cfg_.in_channels, w[0], 1);
        u_->bn1 = BatchNormT<S>(w[0]);
        u_->conv2 = ConvLayerT<S>(w[0], w[1], 1);
        u_->bn2 = BatchNormT<S>(w[1]);
        const int fh = strided_dim(strided_dim(cfg_.in_h, 2), 2);
        const int fw = strided_dim(strided_dim(cfg_.in_w, 2), 2);
        u_->fc1 = DenseLayerT<S>(w[1] * fh * fw, kHiddenUnits);
        u_->fc2 = DenseLayerT<S>(kHiddenUnits, cfg_.k);

        he_init(u_->conv1, rng);
        he_init(u_->bn1, rng);
        he_init(u_->conv2, rng);
        he_init(u_->bn2, rng);
        he_init(u_->fc1, rng);
        he_init(u_->fc2, rng);

        reg_conv("conv1", u_->conv1);
        reg_bn("bn1", u_->bn1);
        reg_conv("conv2", u_->conv2);
        reg_bn("bn2", u_->bn2);
        reg_dense("fc1", u_->fc1);
        reg_dense("fc2", u_->fc2);
    } else {
        l_ = std::make_unique<LStack>();
        l_->conv_in = ConvLayerT<S>(cfg_.in_channels, w[0], 1);
        l_->bn_in = BatchNormT<S>(w[0]);
        l_->block1 = ResidualBlockT<S>(w[0], w[0], 1);
        l_->block2 = ResidualBlockT<S>(w[0], w[1], 2);
        l_->block3 = ResidualBlockT<S>(w[1], w[1], 1);
        l_->conv_out = ConvLayerT<S>(w[1], w[2], 2);
        l_->bn_out = BatchNormT<S>(w[2]);
        l_->fc1 = DenseLayerT<S>(w[2], kHiddenUnits);
        l_->fc2 = DenseLayerT<S>(kHiddenUnits, cfg_.k);

        he_init(l_->conv_in, rng);
        he_init(l_->bn_in, rng);
        he_init(l_->block1, rng);
        he_init(l_->block2, rng);
        he_init(l_->block3, rng);
        he_init(l_->conv_out, rng);
        he_init(l_->bn_out, rng);
        he_init(l_->fc1, rng);
        he_init(l_->fc2, rng);

        reg_conv("conv_in", l_->conv_in);
        reg_bn("bn_in", l_->bn_in);
        reg_block("block1", l_->block1);
        reg_block("block2", l_->block2);
        reg_block("block3", l_->block3);
        reg_conv("conv_out", l_->conv_out);
        reg_bn("bn_out", l_->bn_out);
        reg_dense("fc1", l_->fc1);
        reg_dense("fc2", l_->fc2);
    }
}

template <typename S>
TensorT<S> HashModelT<S>::forward(const TensorT<S>& images, TapeT<S>* tape, bool training) {
    if (images.shape.size() != 4 || images.shape[1] != cfg_.in_channels ||
        images.shape[2] != cfg_.in_h || images.shape[3] != cfg_.in_w) {
        throw ShapeError("input " + shape_str(images.shape) + " does not match configured " +
                         shape_str({-1, cfg_.in_channels, cfg_.in_h, cfg_.in_w}));
    }
    TensorT<S> h;
    if (u_) {
        h = relu(u_->bn1.forward(u_->conv1.forward(images, tape), tape, training), tape);
        h = pool2d(PoolKind::Max, h, 3, 2, 1, tape);
        if (cfg_.attention) h = spatial_attention(h, tape);
        h = relu(u_->bn2.forward(u_->conv2.forward(h, tape), tape, training), tape);
        h = pool2d(PoolKind::Avg, h, 3, 2, 1, tape);
        h = reshape(h, {h.shape[0], h.shape[1] * h.shape[2] * h.shape[3]}, tape);
        h = relu(u_->fc1.forward(h, tape), tape);
        h = u_->fc2.forward(h, tape);
    } else {
        h = relu(l_->bn_in.forward(l_->conv_in.forward(images, tape), tape, training), tape);
        h = l_->block1.forward(h, tape, training);
        h = l_->block2.forward(h, tape, training);
        h = l_->block3.forward(h, tape, training);
        if (cfg_.attention) h = spatial_attention(h, tape);
        h = relu(l_->bn_out.forward(l_->conv_out.forward(h, tape), tape, training), tape);
        h = global_avg_pool(h, tape);
        h = relu(l_->fc1.forward(h, tape), tape);
        h = l_->fc2.forward(h, tape);
    }
    switch (cfg_.head) {
        case Head::Sigmoid:
            return sigmoid(h, tape);
        case Head::Relu:
            return relu(h, tape);
        case Head::Linear:
            return h;
    }
    throw ContractError("unknown head activation");
}

template <typename S>
std::int64_t HashModelT<S>::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p.tensor->size();
    return n;
}

template <typename S>
TensorT<S> encode_batch(HashModelT<S>& model, const TensorT<S>& images, bool training) {
    return model.forward(images, nullptr, training);
}

// ---- binarization ----

HashCode binarize(const std::vector<float>& embedding, const std::vector<float>& thresholds) {
    if (embedding.empty() || embedding.size() != thresholds.size()) {
        throw ShapeError("threshold length must match embedding length");
    }
    HashCode code(static_cast<int>(embedding.size()));
    for (std::size_t i = 0; i < embedding.size(); ++i) {
        if (embedding[i] > thresholds[i]) code.set_bit(static_cast<int>(i), true);
    }
    return code;
}

std::vector<float> uniform_thresholds(int k, float value) {
    if (k < 1) throw ShapeError("k must be >= 1");
    return std::vector<float>(static_cast<std::size_t>(k), value);
}

std::vector<float> median_thresholds(const TensorT<float>& embeddings) {
    if (embeddings.shape.size() != 2) throw ShapeError("median_thresholds expects N x K");
    const std::int64_t n = embeddings.shape[0], k = embeddings.shape[1];
    std::vector<float> taus(static_cast<std::size_t>(k));
    std::vector<float> col(static_cast<std::size_t>(n));
    const auto& v = embeddings.values();
    for (std::int64_t j = 0; j < k; ++j) {
        for (std::int64_t i = 0; i < n; ++i) col[i] = v[i * k + j];
        std::sort(col.begin(), col.end());
        taus[j] = n % 2 ? col[n / 2] : 0.5f * (col[n / 2 - 1] + col[n / 2]);
    }
    return taus;
}

std::vector<float> default_thresholds(Head head, const TensorT<float>& embeddings) {
    if (head == Head::Sigmoid) {
        return uniform_thresholds(static_cast<int>(embeddings.shape.back()));
    }
    return median_thresholds(embeddings);
}

// ---- checkpoint ----

namespace {
constexpr char kMagic[4] = {'A', 'S', 'H', '1'};
}

template <typename S>
void save_checkpoint(const HashModelT<S>& model, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
    const auto& cfg = model.config();
    detail::write_bytes(os, kMagic, 4);
    detail::write_u32(os, kCheckpointVersion);
    detail::write_u8(os, cfg.arch == Arch::U ? 0 : 1);
    detail::write_u32(os, static_cast<std::uint32_t>(cfg.k));
    detail::write_u32(os, static_cast<std::uint32_t>(cfg.in_channels));
    detail::write_u32(os, static_cast<std::uint32_t>(cfg.in_h));
    detail::write_u32(os, static_cast<std::uint32_t>(cfg.in_w));
    const auto& state = model.state();
    detail::write_u32(os, static_cast<std::uint32_t>(state.size()));
    for (const auto& entry : state) {
        detail::write_u16(os, static_cast<std::uint16_t>(entry.name.size()));
        detail::write_bytes(os, entry.name.data(), entry.name.size());
        const auto& t = *entry.tensor;
        detail::write_u8(os, static_cast<std::uint8_t>(t.shape.size()));
        for (const auto d : t.shape) detail::write_u32(os, static_cast<std::uint32_t>(d));
        for (const auto v : t.values()) detail::write_f32(os, static_cast<float>(v));
    }
    if (!os) throw IoError("write failed: " + path.string());
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path.string());
    char magic[4];
    detail::read_bytes(is, magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError(FormatFault::BadMagic, "bad magic in " + path.string());
    }
    const auto version = detail::read_u32(is, "version");
    if (version != kCheckpointVersion) {
        throw FormatError(FormatFault::BadVersion,
                          "unsupported checkpoint version " + std::to_string(version));
    }
    CheckpointInfo info{};
    const auto arch = detail::read_u8(is, "arch");
    if (arch > 1) throw FormatError(FormatFault::Mismatch, "unknown arch id in checkpoint");
    info.arch = arch == 0 ? Arch::U : Arch::L;
    info.k = static_cast<int>(detail::read_u32(is, "k"));
    info.in_channels = static_cast<int>(detail::read_u32(is, "channels"));
    info.in_h = static_cast<int>(detail::read_u32(is, "height"));
    info.in_w = static_cast<int>(detail::read_u32(is, "width"));
    return info;
}

template <typename S>
void load_checkpoint(HashModelT<S>& model, const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path.string());

    char magic[4];
    detail::read_bytes(is, magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError(FormatFault::BadMagic, "bad magic in " + path.string());
    }
    const auto version = detail::read_u32(is, "version");
    if (version != kCheckpointVersion) {
        throw FormatError(FormatFault::BadVersion,
                          "unsupported checkpoint version " + std::to_string(version));
    }
    const auto& cfg = model.config();
    const auto arch = detail::read_u8(is, "arch");
    const auto k = detail::read_u32(is, "k");
    const auto c = detail::read_u32(is, "channels");
    const auto h = detail::read_u32(is, "height");
    const auto w = detail::read_u32(is, "width");
    const std::uint8_t want_arch = cfg.arch == Arch::U ? 0 : 1;
    if (arch != want_arch || k != static_cast<std::uint32_t>(cfg.k) ||
        c != static_cast<std::uint32_t>(cfg.in_channels) ||
        h != static_cast<std::uint32_t>(cfg.in_h) || w != static_cast<std::uint32_t>(cfg.in_w)) {
        std::ostringstream os;
        os << "checkpoint header (arch=" << int(arch) << ", k=" << k << ", input=" << c << "x"
           << h << "x" << w << ") does not match the model config";
        throw FormatError(FormatFault::Mismatch, os.str());
    }

    auto& state = model.state();
    std::unordered_map<std::string, ParamRef<S>*> by_name;
    for (auto& entry : state) by_name[entry.name] = &entry;

    const auto count = detail::read_u32(is, "tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = detail::read_u16(is, "name length");
        std::string name(name_len, '\0');
        detail::read_bytes(is, name.data(), name_len, "name");
        const auto ndim = detail::read_u8(is, "ndim");
        Shape dims(ndim);
        for (auto& d : dims) d = detail::read_u32(is, "dim");

        const auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw FormatError(FormatFault::Mismatch,
                              "unknown or repeated tensor in checkpoint: " + name);
        }
        auto& t = *it->second->tensor;
        if (t.shape != dims) {
            throw FormatError(FormatFault::Mismatch,
                              "tensor " + name + " has shape " + shape_str(dims) +
                                  " in file but " + shape_str(t.shape) + " in model");
        }
        auto& v = t.values_mut();
        for (auto& x : v) x = static_cast<S>(detail::read_f32(is, name.c_str()));
        by_name.erase(it);
    }
    if (!by_name.empty()) {
        throw FormatError(FormatFault::Mismatch, "checkpoint is missing model tensors");
    }
}

template class HashModelT<float>;
template class HashModelT<double>;
template TensorT<float> encode_batch<float>(HashModelT<float>&, const TensorT<float>&, bool);
template TensorT<double> encode_batch<double>(HashModelT<double>&, const TensorT<double>&, bool);
template void save_checkpoint<float>(const HashModelT<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(const HashModelT<double>&, const std::filesystem::path&);
template void load_checkpoint<float>(HashModelT<float>&, const std::filesystem::path&);
template void load_checkpoint<double>(HashModelT<double>&, const std::filesystem::path&);

}  // namespace ash
