#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace lates {

/// One layer's activations for a whole split, row-major n_examples x feature_dim.
struct LayerBlock {
    std::uint32_t layer_index = 0; // 1-based position in the network
    std::uint32_t feature_dim = 0;
    bool is_final_logits = false;
    std::vector<float> data;

    float at(std::size_t example, std::size_t feature) const {
        return data[example * feature_dim + feature];
    }
};

/// On-disk container of per-layer activation matrices plus labels, one split.
///
/// File layout (little-endian, bit-exact):
///   magic "LATS" | u32 version=1 | u32 n_layers | u32 n_examples | u32 n_classes
///   per layer: u32 layer_index | u32 feature_dim | u8 is_final_logits
///              | f32 data row-major (n_examples * feature_dim)
///   u32 labels (n_examples)
///   u32 CRC32 of all preceding bytes
struct ActivationDump {
    std::uint32_t n_examples = 0;
    std::uint32_t n_classes = 0;
    std::vector<LayerBlock> layers;
    std::vector<std::uint32_t> labels;

    /// Throws ValidationError if any invariant is violated: row counts, label
    /// range, finite values, final-logits dimension, 1-based layer ordering.
    void validate() const;

    /// Index of the block flagged is_final_logits; throws if absent.
    std::size_t final_logits_index() const;

    /// Layer data widened to double for numeric work.
    Eigen::MatrixXd layer_as_matrix(std::size_t layer) const;
};

struct SplitSpec {
    double train_fraction = 0.9;
    double holdout_fraction = 0.1;
    std::uint64_t seed = 0;
    bool stratify = false;
};

void write_dump(const ActivationDump& dump, const std::filesystem::path& path);
ActivationDump read_dump(const std::filesystem::path& path);

/// Sibling free-form provenance file (`<name>.manifest.json`); never required
/// for correctness.
void write_manifest(const std::filesystem::path& dump_path,
                    const std::map<std::string, std::string>& fields);
std::filesystem::path manifest_path_for(const std::filesystem::path& dump_path);

/// Deterministic (train, holdout) split. Sizes are round(fraction * n); the
/// two example sets are disjoint. With stratify, rounding happens per class.
std::pair<ActivationDump, ActivationDump> split_holdout(const ActivationDump& dump,
                                                        const SplitSpec& spec);

/// Dump restricted to the given example rows (layer structure preserved).
ActivationDump take_examples(const ActivationDump& dump, const std::vector<std::size_t>& rows);

} // namespace lates
