#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ash/hashcode.hpp"
#include "ash/tensor.hpp"

namespace ash {

enum class Arch { U, L };
enum class Head { Sigmoid, Relu, Linear };

// Width of the hidden fully-connected layer in both stacks.
inline constexpr int kHiddenUnits = 4096;

struct AshConfig {
    Arch arch = Arch::U;
    int k = 12;
    int in_channels = 3;
    int in_h = 32;
    int in_w = 32;
    std::vector<int> widths;  // empty = arch default: U {16, 32}, L {16, 32, 64}
    Head head = Head::Sigmoid;
    bool attention = true;
    std::uint64_t seed = 0;

    std::vector<int> effective_widths() const;
    void validate() const;  // throws ShapeError / ContractError
    // Non-fatal config advisories, e.g. code length not small against the
    // input dimension.
    std::vector<std::string> warnings() const;
};

template <typename S>
struct ParamRef {
    std::string name;
    TensorT<S>* tensor;
    bool trainable;     // false for running statistics
    bool weight_decay;  // conv / dense weights only
};

// The hashing network: an ordered layer stack ending in a K-unit head.
// ASH-U: Conv-BN-ReLU-MaxPool-[gate]-Conv-BN-ReLU-AvgPool-FC(4096)-ReLU-FC(K).
// ASH-L: Conv-BN-ReLU-3 residual blocks-[gate]-Conv(s2)-BN-ReLU-GAP-FC(4096)-ReLU-FC(K).
template <typename S>
class HashModelT {
public:
    explicit HashModelT(const AshConfig& cfg);
    HashModelT(const HashModelT&) = delete;
    HashModelT& operator=(const HashModelT&) = delete;
    HashModelT(HashModelT&&) noexcept;
    HashModelT& operator=(HashModelT&&) noexcept;
    ~HashModelT();

    // N x C x H x W -> N x K continuous codes. Training mode uses batch
    // statistics in BN and updates the running buffers.
    TensorT<S> forward(const TensorT<S>& images, TapeT<S>* tape, bool training);

    const AshConfig& config() const { return cfg_; }
    std::vector<ParamRef<S>>& parameters() { return params_; }
    const std::vector<ParamRef<S>>& parameters() const { return params_; }
    // Parameters plus running statistics, in checkpoint order.
    std::vector<ParamRef<S>>& state() { return state_; }
    const std::vector<ParamRef<S>>& state() const { return state_; }
    std::int64_t parameter_count() const;

private:
    struct UStack;
    struct LStack;

    AshConfig cfg_;
    std::unique_ptr<UStack> u_;
    std::unique_ptr<LStack> l_;
    std::vector<ParamRef<S>> params_;
    std::vector<ParamRef<S>> state_;
};

using HashModel = HashModelT<float>;

template <typename S>
TensorT<S> encode_batch(HashModelT<S>& model, const TensorT<S>& images, bool training = false);

// bit_i = 1 iff e_i > tau_i; ties binarize to 0.
HashCode binarize(const std::vector<float>& embedding, const std::vector<float>& thresholds);

std::vector<float> uniform_thresholds(int k, float value = 0.5f);
// Per-dimension medians of an N x K embedding matrix (midpoint for even N).
std::vector<float> median_thresholds(const TensorT<float>& embeddings);
// Default rule: 0.5 for a sigmoid head, per-dimension medians otherwise.
std::vector<float> default_thresholds(Head head, const TensorT<float>& embeddings);

// Checkpoint file: "ASH1" | version u32 | arch u8 | K u32 | C,H,W u32 each |
// tensor count u32 | per tensor: name (u16 length + bytes), ndim u8,
// dims u32 each, f32 values.
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename S>
void save_checkpoint(const HashModelT<S>& model, const std::filesystem::path& path);
// Loads into a model built from a matching config; header or tensor-shape
// disagreement raises FormatError with the specific fault.
template <typename S>
void load_checkpoint(HashModelT<S>& model, const std::filesystem::path& path);

struct CheckpointInfo {
    Arch arch;
    int k, in_channels, in_h, in_w;
};
// Header-only read, for rebuilding a model before load_checkpoint.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

}  // namespace ash
