#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "qfl/learn.hpp"

namespace qfl {

struct Dataset {
    std::string name;
    std::vector<LabeledSample> samples;
    int num_classes = 0;
    std::size_t feature_dim = 0;
    /// Original label text for every class index.
    std::vector<std::string> label_names;

    /// Throws ConfigError if empty, ragged or labels fall outside [0, C).
    void validate() const;
    [[nodiscard]] std::size_t size() const noexcept { return samples.size(); }
};

/// A training set with an optional dedicated held-out split.
struct DataBundle {
    Dataset train;
    std::optional<Dataset> test;
};

struct BlobOptions {
    int num_classes = 2;
    std::size_t num_features = 4;
    std::size_t num_samples = 200;
    std::uint64_t seed = 0;

    friend bool operator==(const BlobOptions&, const BlobOptions&) = default;
};

/// Gaussian clusters with unit variance around centers drawn uniformly from
/// [-10, 10]^d. Sample i carries label i mod C, so classes are balanced.
[[nodiscard]] Dataset synthetic_blobs(const BlobOptions& options);

struct BuiltinOptions {
    BlobOptions blobs;
    /// Root of the on-disk subsets; see README for the layout.
    std::filesystem::path data_dir = default_data_dir();

    /// $QFL_DATA_DIR if set, otherwise ./data.
    static std::filesystem::path default_data_dir();
};

inline constexpr std::size_t kSubsetTrainRows = 1000;
inline constexpr std::size_t kSubsetTestRows = 200;

/// digits8x8 | synthetic_blobs | mnist_subset | fashion_subset.
[[nodiscard]] DataBundle load_builtin(std::string_view name, const BuiltinOptions& options = {});

[[nodiscard]] bool is_builtin_dataset(std::string_view name) noexcept;

/// Label column by header name or zero-based index.
using LabelColumn = std::variant<std::string, std::size_t>;

[[nodiscard]] Dataset parse_csv(std::istream& in, const LabelColumn& label_column, std::string name = "csv");
[[nodiscard]] Dataset load_csv(const std::filesystem::path& path, const LabelColumn& label_column);

/// Per-feature min-max statistics.
struct FeatureScaling {
    std::vector<double> min;
    std::vector<double> max;

    [[nodiscard]] static FeatureScaling fit(const Dataset& dataset);
};

/// Min-max scales every feature with `scaling`, then truncates or zero-pads
/// to 2^Q entries when `num_qubits` is given. Constant features map to 0.
[[nodiscard]] Dataset preprocess(const Dataset& dataset, const FeatureScaling& scaling,
                                 std::optional<int> num_qubits);

/// preprocess() with statistics fitted on `dataset` itself.
[[nodiscard]] Dataset preprocess(const Dataset& dataset, int num_qubits);

struct TrainTestSplit {
    Dataset train;
    Dataset test;
};

/// Seeded shuffle, then the first round(n * test_fraction) samples (at least
/// one, at most n - 1) become the test split.
[[nodiscard]] TrainTestSplit train_test_split(const Dataset& dataset, double test_fraction, std::uint64_t seed);

enum class PartitionMode { kIid, kNonIidLabelSkew };

inline constexpr int kMaxClients = 100;

struct PartitionPlan {
    PartitionMode mode = PartitionMode::kIid;
    int num_clients = 5;
    int shards_per_client = 2;
    std::uint64_t seed = 0;
};

/// Sample indices per client. IID: shuffle then near-equal contiguous split.
/// Label skew: sort by label, cut into N * shards_per_client contiguous
/// shards and deal them out through a seeded permutation.
[[nodiscard]] std::vector<std::vector<std::size_t>> partition(const Dataset& dataset, const PartitionPlan& plan);

[[nodiscard]] std::vector<LabeledSample> gather(const Dataset& dataset, std::span<const std::size_t> indices);

}  // namespace qfl
