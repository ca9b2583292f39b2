#include "ash/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "ash/rng.hpp"

namespace ash {

namespace fs = std::filesystem;

// ---- manifest ----

DatasetManifest read_manifest(const fs::path& file) {
    std::ifstream is(file);
    if (!is) throw DataError("cannot open manifest: " + file.string());
    DatasetManifest m;
    m.dir = file.has_parent_path() ? file.parent_path() : fs::path(".");

    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (lineno == 1) {
            if (line != "path,label") {
                throw DataError(file.string() + ":1: expected header 'path,label'");
            }
            continue;
        }
        const auto comma = line.rfind(',');
        if (comma == std::string::npos || comma == 0 || comma + 1 == line.size()) {
            throw DataError(file.string() + ":" + std::to_string(lineno) + ": malformed line");
        }
        ManifestEntry e;
        e.path = line.substr(0, comma);
        try {
            std::size_t used = 0;
            e.label = std::stoi(line.substr(comma + 1), &used);
            if (used != line.size() - comma - 1) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw DataError(file.string() + ":" + std::to_string(lineno) + ": bad label");
        }
        m.entries.push_back(std::move(e));
    }
    if (m.entries.empty()) throw DataError("manifest has no entries: " + file.string());

    std::map<int, int> dense;
    for (const auto& e : m.entries) dense.emplace(e.label, 0);
    int next = 0;
    for (auto& [raw, mapped] : dense) mapped = next++;
    m.class_count = next;
    m.dense_labels.reserve(m.entries.size());
    for (const auto& e : m.entries) m.dense_labels.push_back(dense.at(e.label));
    return m;
}

void write_manifest(const fs::path& file, const std::vector<ManifestEntry>& entries) {
    std::ofstream os(file, std::ios::binary);  // binary keeps LF endings everywhere
    if (!os) throw IoError("cannot write manifest: " + file.string());
    os << "path,label\n";
    for (const auto& e : entries) os << e.path << ',' << e.label << '\n';
    if (!os) throw IoError("write failed: " + file.string());
}

// ---- PGM / PPM ----

namespace {

int read_pnm_token(std::istream& is, const std::string& file) {
    // Skips whitespace and '#' comments, then reads one unsigned int.
    int c = is.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = is.get();
        }
        c = is.get();
    }
    if (c == EOF || !std::isdigit(c)) throw DataError(file + ": malformed image header");
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        c = is.get();
    }
    return v;
}

}  // namespace

void write_image(const fs::path& file, int channels, int height, int width,
                 const float* pixels) {
    if (channels != 1 && channels != 3) {
        throw DataError("only 1-channel PGM and 3-channel PPM are supported");
    }
    std::ofstream os(file, std::ios::binary);
    if (!os) throw IoError("cannot write image: " + file.string());
    os << (channels == 1 ? "P5" : "P6") << "\n" << width << " " << height << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(width) * channels);
    const std::int64_t plane = static_cast<std::int64_t>(height) * width;
    for (int h = 0; h < height; ++h) {
        for (int w = 0; w < width; ++w) {
            for (int c = 0; c < channels; ++c) {
                const float v = pixels[c * plane + h * width + w];
                const long q = std::lround(std::min(1.0f, std::max(0.0f, v)) * 255.0f);
                row[w * channels + c] = static_cast<unsigned char>(q);
            }
        }
        os.write(reinterpret_cast<const char*>(row.data()),
                 static_cast<std::streamsize>(row.size()));
    }
    if (!os) throw IoError("write failed: " + file.string());
}

ImageSample read_image(const fs::path& file, int label, std::int64_t id) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw DataError("missing image file: " + file.string());
    char m0 = 0, m1 = 0;
    is.get(m0);
    is.get(m1);
    int channels = 0;
    if (m0 == 'P' && m1 == '5') {
        channels = 1;
    } else if (m0 == 'P' && m1 == '6') {
        channels = 3;
    } else {
        throw DataError(file.string() + ": unsupported image format (want binary PGM/PPM)");
    }
    const int width = read_pnm_token(is, file.string());
    const int height = read_pnm_token(is, file.string());
    const int maxval = read_pnm_token(is, file.string());
    if (width < 1 || height < 1) throw DataError(file.string() + ": bad image dims");
    if (maxval != 255) throw DataError(file.string() + ": only 8-bit images are supported");

    const std::size_t count = static_cast<std::size_t>(width) * height * channels;
    std::vector<unsigned char> raw(count);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(is.gcount()) != count) {
        throw DataError(file.string() + ": truncated pixel data");
    }

    ImageSample s;
    s.id = id;
    s.label = label;
    s.channels = channels;
    s.height = height;
    s.width = width;
    s.pixels.resize(count);
    const std::int64_t plane = static_cast<std::int64_t>(height) * width;
    for (int h = 0; h < height; ++h) {
        for (int w = 0; w < width; ++w) {
            for (int c = 0; c < channels; ++c) {
                s.pixels[c * plane + h * width + w] =
                    static_cast<float>(raw[(h * width + w) * channels + c]) / 255.0f;
            }
        }
    }
    return s;
}

std::vector<ImageSample> load_dataset(const fs::path& manifest_file) {
    const auto m = read_manifest(manifest_file);
    std::vector<ImageSample> out;
    out.reserve(m.entries.size());
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        out.push_back(read_image(m.dir / m.entries[i].path, m.dense_labels[i],
                                 static_cast<std::int64_t>(i)));
    }
    return out;
}

TensorT<float> to_batch(const std::vector<ImageSample>& samples) {
    if (samples.empty()) throw DataError("cannot batch an empty sample list");
    const auto& first = samples.front();
    const std::int64_t per =
        static_cast<std::int64_t>(first.channels) * first.height * first.width;
    std::vector<float> v;
    v.reserve(samples.size() * per);
    for (const auto& s : samples) {
        if (s.channels != first.channels || s.height != first.height || s.width != first.width) {
            throw ShapeError("samples in a batch must share dimensions");
        }
        v.insert(v.end(), s.pixels.begin(), s.pixels.end());
    }
    return TensorT<float>::from(
        {static_cast<std::int64_t>(samples.size()), first.channels, first.height, first.width},
        std::move(v));
}

// ---- synthetic data ----

int SyntheticSpec::count_for(int cls) const {
    if (per_class.size() == 1) return per_class[0];
    return per_class.at(static_cast<std::size_t>(cls));
}

int SyntheticSpec::total() const {
    int n = 0;
    for (int c = 0; c < classes; ++c) n += count_for(c);
    return n;
}

namespace {

void validate_spec(const SyntheticSpec& spec) {
    if (spec.classes < 1) throw DataError("need at least one class");
    if (spec.per_class.size() != 1 &&
        spec.per_class.size() != static_cast<std::size_t>(spec.classes)) {
        throw DataError("per_class must hold one value or one per class");
    }
    for (int c = 0; c < spec.classes; ++c) {
        if (spec.count_for(c) < 1) throw DataError("per-class counts must be positive");
    }
    if (spec.channels != 1 && spec.channels != 3) {
        throw DataError("synthetic images support 1 or 3 channels");
    }
    if (spec.patch < 1 || spec.patch > spec.height || spec.patch > spec.width) {
        throw DataError("patch must fit inside the image");
    }
    if (spec.delta <= 0.0 || spec.delta >= 1.0) throw DataError("delta must lie in (0, 1)");
    if (spec.smooth_radius < 0) throw DataError("smooth radius must be >= 0");
}

// Box blur with border-clamped windows (divides by the in-bounds count).
void box_blur(std::vector<float>& img, int height, int width, int radius) {
    if (radius == 0) return;
    std::vector<float> out(img.size());
    for (int h = 0; h < height; ++h) {
        for (int w = 0; w < width; ++w) {
            float acc = 0.0f;
            int count = 0;
            for (int dh = -radius; dh <= radius; ++dh) {
                const int hh = h + dh;
                if (hh < 0 || hh >= height) continue;
                for (int dw = -radius; dw <= radius; ++dw) {
                    const int ww = w + dw;
                    if (ww < 0 || ww >= width) continue;
                    acc += img[hh * width + ww];
                    ++count;
                }
            }
            out[h * width + w] = acc / static_cast<float>(count);
        }
    }
    img = std::move(out);
}

}  // namespace

void gen_synthetic(const SyntheticSpec& spec, const fs::path& out_dir) {
    validate_spec(spec);
    std::error_code ec;
    fs::create_directories(out_dir / "images", ec);
    if (ec) throw IoError("cannot create " + (out_dir / "images").string());

    // One fixed patch location per class, pairwise distinct.
    CounterRng loc_rng(spec.seed, 1);
    std::vector<std::pair<int, int>> locations;
    for (int c = 0; c < spec.classes; ++c) {
        while (true) {
            const int top = static_cast<int>(loc_rng.next_below(spec.height - spec.patch + 1));
            const int left = static_cast<int>(loc_rng.next_below(spec.width - spec.patch + 1));
            if (std::find(locations.begin(), locations.end(), std::make_pair(top, left)) ==
                locations.end()) {
                locations.emplace_back(top, left);
                break;
            }
        }
    }

    std::vector<ManifestEntry> entries;
    const std::int64_t plane = static_cast<std::int64_t>(spec.height) * spec.width;
    std::vector<float> pixels(static_cast<std::size_t>(spec.channels) * plane);
    std::vector<float> channel(static_cast<std::size_t>(plane));
    std::int64_t image_id = 0;
    for (int cls = 0; cls < spec.classes; ++cls) {
        const auto [top, left] = locations[cls];
        const float signed_delta =
            static_cast<float>(cls % 2 == 0 ? spec.delta : -spec.delta);
        for (int i = 0; i < spec.count_for(cls); ++i, ++image_id) {
            CounterRng rng(spec.seed, 1000 + static_cast<std::uint64_t>(image_id));
            for (int c = 0; c < spec.channels; ++c) {
                for (auto& v : channel) v = static_cast<float>(rng.next_double());
                box_blur(channel, spec.height, spec.width, spec.smooth_radius);
                std::copy(channel.begin(), channel.end(), pixels.begin() + c * plane);
            }
            // Salient patch on the first channel only: a small local shift that
            // barely moves the global image mean.
            for (int h = top; h < top + spec.patch; ++h) {
                for (int w = left; w < left + spec.patch; ++w) {
                    float& v = pixels[h * spec.width + w];
                    v = std::min(1.0f, std::max(0.0f, v + signed_delta));
                }
            }

            std::ostringstream name;
            name << "images/img_" << std::setw(6) << std::setfill('0') << image_id
                 << (spec.channels == 1 ? ".pgm" : ".ppm");
            write_image(out_dir / name.str(), spec.channels, spec.height, spec.width,
                        pixels.data());
            entries.push_back({name.str(), cls});
        }
    }
    write_manifest(out_dir / "manifest.csv", entries);
}

// ---- split ----

SplitResult split_manifest(const DatasetManifest& manifest, double fraction, int per_class_query,
                           std::uint64_t seed) {
    if (per_class_query <= 0 && (fraction <= 0.0 || fraction >= 1.0)) {
        throw DataError("split fraction must lie in (0, 1)");
    }
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        by_class[manifest.dense_labels[i]].push_back(i);
    }

    std::set<std::size_t> query_rows;
    for (auto& [label, rows] : by_class) {
        const int n = static_cast<int>(rows.size());
        int q;
        if (per_class_query > 0) {
            if (per_class_query > n) {
                throw DataError("class " + std::to_string(label) + " has only " +
                                std::to_string(n) + " items, cannot hold out " +
                                std::to_string(per_class_query));
            }
            q = per_class_query;
        } else {
            q = std::max(1, static_cast<int>(std::floor(fraction * n)));
        }
        CounterRng rng(seed, static_cast<std::uint64_t>(label));
        rng.shuffle(rows);
        for (int i = 0; i < q; ++i) query_rows.insert(rows[static_cast<std::size_t>(i)]);
    }

    SplitResult out;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        (query_rows.count(i) ? out.query : out.gallery).push_back(manifest.entries[i]);
    }
    return out;
}

}  // namespace ash
