#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ash/tensor.hpp"

namespace ash {

struct ImageSample {
    std::int64_t id;
    int label;  // dense 0..C-1
    int channels, height, width;
    std::vector<float> pixels;  // planar C x H x W, values in [0, 1]
};

struct ManifestEntry {
    std::string path;  // relative to the manifest's directory
    int label;         // as written in the file

    bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
    std::filesystem::path dir;
    std::vector<ManifestEntry> entries;
    std::vector<int> dense_labels;  // parallel to entries, 0..class_count-1
    int class_count = 0;
};

// CSV with header "path,label", UTF-8, LF endings. Malformed lines are
// reported with their line number.
DatasetManifest read_manifest(const std::filesystem::path& file);
void write_manifest(const std::filesystem::path& file, const std::vector<ManifestEntry>& entries);

// Binary PGM (P5, 1 channel) / PPM (P6, 3 channels), 8-bit. Bytes scale to
// [0, 1] as v / 255 on load and round(v * 255) on save.
void write_image(const std::filesystem::path& file, int channels, int height, int width,
                 const float* pixels);
ImageSample read_image(const std::filesystem::path& file, int label, std::int64_t id);

std::vector<ImageSample> load_dataset(const std::filesystem::path& manifest_file);

// Images as one N x C x H x W tensor, in the given order.
TensorT<float> to_batch(const std::vector<ImageSample>& samples);

struct SyntheticSpec {
    int classes = 4;
    std::vector<int> per_class = {250};  // one value = uniform; else one per class
    int channels = 3;
    int height = 32;
    int width = 32;
    int smooth_radius = 2;  // box-blur radius for the noise background
    int patch = 6;          // square salient patch side
    double delta = 0.25;    // patch contrast; even classes brighten, odd darken
    std::uint64_t seed = 7;

    int count_for(int cls) const;
    int total() const;
};

// Smoothed-noise backgrounds shared across classes; each class gets one fixed
// patch location (distinct between classes) where +/- delta is added on the
// first channel. Writes images/ and manifest.csv; byte-identical per
// (spec, seed).
void gen_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

struct SplitResult {
    std::vector<ManifestEntry> gallery;
    std::vector<ManifestEntry> query;
};

// Seeded per-class holdout. Query count per class is per_class_query when
// > 0, else max(1, floor(count * fraction)). Output preserves manifest order.
SplitResult split_manifest(const DatasetManifest& manifest, double fraction, int per_class_query,
                           std::uint64_t seed);

}  // namespace ash
