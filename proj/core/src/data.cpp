#include "qfl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "qfl/error.hpp"
#include "qfl/random.hpp"

namespace qfl {

namespace detail {
extern const std::size_t kDigitsRows;
extern const std::uint8_t kDigitsTable[];
}  // namespace detail

void Dataset::validate() const {
    if (samples.empty()) {
        throw ConfigError("dataset '" + name + "' is empty");
    }
    if (num_classes < 1) {
        throw ConfigError("dataset '" + name + "' has no classes");
    }
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (s.features.size() != feature_dim) {
            throw ConfigError("dataset '" + name + "' sample " + std::to_string(i) + " has " +
                              std::to_string(s.features.size()) + " features, expected " +
                              std::to_string(feature_dim));
        }
        if (s.label < 0 || s.label >= num_classes) {
            throw ConfigError("dataset '" + name + "' sample " + std::to_string(i) + " label " +
                              std::to_string(s.label) + " outside [0, " + std::to_string(num_classes) + ")");
        }
    }
}

namespace {

std::vector<std::string> numbered_labels(int count) {
    std::vector<std::string> names;
    for (int c = 0; c < count; ++c) {
        names.push_back(std::to_string(c));
    }
    return names;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::optional<double> parse_number(std::string_view text) {
    text = trim(text);
    if (!text.empty() && text.front() == '+') {
        text.remove_prefix(1);
    }
    if (text.empty()) {
        return std::nullopt;
    }
    double value = 0.0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || end != text.data() + text.size() || !std::isfinite(value)) {
        return std::nullopt;
    }
    return value;
}

// Splits one CSV record. Double quotes group fields; "" escapes a quote.
std::vector<std::string> split_record(std::string_view line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else {
            field.push_back(ch);
        }
    }
    if (quoted) {
        throw ParseError("line " + std::to_string(line_no) + ": unterminated quoted field", line_no);
    }
    fields.push_back(std::move(field));
    for (auto& f : fields) {
        f = std::string(trim(f));
    }
    return fields;
}

struct Record {
    std::size_t line;
    std::vector<std::string> fields;
};

std::vector<Record> read_records(std::istream& in) {
    std::vector<Record> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) {
            line.erase(0, 3);
        }
        if (trim(line).empty()) {
            continue;
        }
        records.push_back({line_no, split_record(line, line_no)});
    }
    return records;
}

Dataset load_subset_split(const std::filesystem::path& dir, const std::string& split, std::size_t limit,
                          const std::string& name) {
    const auto features_path = dir / (split + "_features.csv");
    const auto labels_path = dir / (split + "_labels.csv");
    std::ifstream features_in(features_path);
    if (!features_in) {
        throw ConfigError("missing data file for " + name + ": expected " + features_path.string());
    }
    std::ifstream labels_in(labels_path);
    if (!labels_in) {
        throw ConfigError("missing data file for " + name + ": expected " + labels_path.string());
    }
    Dataset ds;
    ds.name = name;
    std::string line;
    std::size_t line_no = 0;
    while (ds.samples.size() < limit && std::getline(features_in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        LabeledSample sample;
        const auto fields = split_record(line, line_no);
        for (std::size_t col = 0; col < fields.size(); ++col) {
            const auto v = parse_number(fields[col]);
            if (!v) {
                throw ParseError(features_path.string() + " line " + std::to_string(line_no) + " column " +
                                     std::to_string(col) + ": non-numeric value '" + fields[col] + "'",
                                 line_no, col);
            }
            sample.features.push_back(*v);
        }
        if (ds.samples.empty()) {
            ds.feature_dim = sample.features.size();
        } else if (sample.features.size() != ds.feature_dim) {
            throw ParseError(features_path.string() + " line " + std::to_string(line_no) + ": expected " +
                                 std::to_string(ds.feature_dim) + " fields, found " +
                                 std::to_string(sample.features.size()),
                             line_no);
        }
        ds.samples.push_back(std::move(sample));
    }
    std::size_t labelled = 0;
    line_no = 0;
    while (labelled < ds.samples.size() && std::getline(labels_in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        const auto v = parse_number(line);
        if (!v || *v < 0 || std::floor(*v) != *v) {
            throw ParseError(labels_path.string() + " line " + std::to_string(line_no) +
                                 ": label must be a non-negative integer",
                             line_no);
        }
        ds.samples[labelled++].label = static_cast<int>(*v);
    }
    if (labelled < ds.samples.size()) {
        throw ConfigError(labels_path.string() + " has " + std::to_string(labelled) + " labels for " +
                          std::to_string(ds.samples.size()) + " feature rows");
    }
    return ds;
}

DataBundle load_subset(const std::string& name, const std::filesystem::path& data_dir) {
    const auto dir = data_dir / name;
    DataBundle bundle{load_subset_split(dir, "train", kSubsetTrainRows, name),
                      load_subset_split(dir, "test", kSubsetTestRows, name)};
    if (bundle.train.feature_dim != bundle.test->feature_dim) {
        throw ConfigError(name + ": train and test feature counts differ");
    }
    int max_label = 0;
    for (const auto* split : {&bundle.train, &*bundle.test}) {
        for (const auto& s : split->samples) {
            max_label = std::max(max_label, s.label);
        }
    }
    for (auto* split : {&bundle.train, &*bundle.test}) {
        split->num_classes = max_label + 1;
        split->label_names = numbered_labels(max_label + 1);
        split->validate();
    }
    return bundle;
}

DataBundle load_digits() {
    constexpr std::size_t kStride = 65;
    auto take = [](std::size_t begin, std::size_t end) {
        Dataset ds;
        ds.name = "digits8x8";
        ds.num_classes = 10;
        ds.feature_dim = 64;
        ds.label_names = numbered_labels(10);
        for (std::size_t r = begin; r < end; ++r) {
            const std::uint8_t* row = detail::kDigitsTable + r * kStride;
            LabeledSample s;
            s.features.assign(row, row + 64);
            s.label = row[64];
            ds.samples.push_back(std::move(s));
        }
        return ds;
    };
    const std::size_t train_end = std::min(kSubsetTrainRows, detail::kDigitsRows);
    const std::size_t test_end = std::min(train_end + kSubsetTestRows, detail::kDigitsRows);
    return DataBundle{take(0, train_end), take(train_end, test_end)};
}

constexpr std::string_view kBuiltinNames[] = {"digits8x8", "synthetic_blobs", "mnist_subset", "fashion_subset"};

}  // namespace

Dataset synthetic_blobs(const BlobOptions& options) {
    if (options.num_classes < 1 || options.num_features < 1 || options.num_samples < 1) {
        throw ConfigError("synthetic_blobs needs positive num_classes, num_features and num_samples");
    }
    // Portable stream: SplitMix64 words, 53-bit uniforms, one Box-Muller
    // normal per pair of uniforms. The same sequence is easy to rebuild
    // outside of C++.
    std::uint64_t counter = options.seed;
    auto uniform = [&counter] {
        const std::uint64_t word = mix64(counter);
        counter += 0x9e3779b97f4a7c15ULL;
        return static_cast<double>(word >> 11) * 0x1.0p-53;
    };
    auto normal = [&uniform] {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(2.0 * std::numbers::pi * u2);
    };
    const auto classes = static_cast<std::size_t>(options.num_classes);
    std::vector<std::vector<double>> centers(classes, std::vector<double>(options.num_features));
    for (auto& center : centers) {
        for (auto& x : center) {
            x = -10.0 + 20.0 * uniform();
        }
    }
    Dataset ds;
    ds.name = "synthetic_blobs";
    ds.num_classes = options.num_classes;
    ds.feature_dim = options.num_features;
    ds.label_names = numbered_labels(options.num_classes);
    ds.samples.reserve(options.num_samples);
    for (std::size_t i = 0; i < options.num_samples; ++i) {
        LabeledSample s;
        s.label = static_cast<int>(i % classes);
        s.features = centers[i % classes];
        for (auto& x : s.features) {
            x += normal();
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

std::filesystem::path BuiltinOptions::default_data_dir() {
    if (const char* env = std::getenv("QFL_DATA_DIR"); env != nullptr && *env != '\0') {
        return env;
    }
    return "data";
}

bool is_builtin_dataset(std::string_view name) noexcept {
    return std::find(std::begin(kBuiltinNames), std::end(kBuiltinNames), name) != std::end(kBuiltinNames);
}

DataBundle load_builtin(std::string_view name, const BuiltinOptions& options) {
    if (name == "digits8x8") {
        return load_digits();
    }
    if (name == "synthetic_blobs") {
        return DataBundle{synthetic_blobs(options.blobs), std::nullopt};
    }
    if (name == "mnist_subset" || name == "fashion_subset") {
        return load_subset(std::string(name), options.data_dir);
    }
    std::string known;
    for (auto n : kBuiltinNames) {
        known += (known.empty() ? "" : ", ") + std::string(n);
    }
    throw ConfigError("unknown builtin dataset '" + std::string(name) + "' (available: " + known + ")");
}

Dataset parse_csv(std::istream& in, const LabelColumn& label_column, std::string name) {
    auto records = read_records(in);
    if (records.empty()) {
        throw ParseError("CSV is empty", 0);
    }
    const std::size_t width = records.front().fields.size();
    for (const auto& r : records) {
        if (r.fields.size() != width) {
            throw ParseError("line " + std::to_string(r.line) + ": expected " + std::to_string(width) +
                                 " fields, found " + std::to_string(r.fields.size()),
                             r.line);
        }
    }
    if (width < 2) {
        throw ParseError("CSV needs a label column and at least one feature column", records.front().line);
    }

    std::size_t label_index = 0;
    bool has_header = false;
    if (const auto* by_name = std::get_if<std::string>(&label_column)) {
        const auto& header = records.front().fields;
        const auto it = std::find(header.begin(), header.end(), *by_name);
        if (it == header.end()) {
            throw ConfigError("label column '" + *by_name + "' not found in header");
        }
        label_index = static_cast<std::size_t>(it - header.begin());
        has_header = true;
    } else {
        label_index = std::get<std::size_t>(label_column);
        if (label_index >= width) {
            throw ConfigError("label column index " + std::to_string(label_index) + " out of range for " +
                              std::to_string(width) + " columns");
        }
        const auto& first = records.front().fields;
        for (std::size_t col = 0; col < width; ++col) {
            if (col != label_index && !parse_number(first[col])) {
                has_header = true;
                break;
            }
        }
    }

    const std::size_t first_data = has_header ? 1 : 0;
    if (records.size() - first_data < 2) {
        throw ConfigError("CSV needs at least 2 data rows, found " + std::to_string(records.size() - first_data));
    }

    Dataset ds;
    ds.name = std::move(name);
    ds.feature_dim = width - 1;
    std::unordered_map<std::string, int> label_ids;
    for (std::size_t r = first_data; r < records.size(); ++r) {
        const auto& rec = records[r];
        LabeledSample s;
        s.features.reserve(ds.feature_dim);
        for (std::size_t col = 0; col < width; ++col) {
            if (col == label_index) {
                continue;
            }
            const auto v = parse_number(rec.fields[col]);
            if (!v) {
                throw ParseError("line " + std::to_string(rec.line) + " column " + std::to_string(col) +
                                     ": non-numeric value '" + rec.fields[col] + "'",
                                 rec.line, col);
            }
            s.features.push_back(*v);
        }
        const auto& label_text = rec.fields[label_index];
        auto [it, inserted] = label_ids.try_emplace(label_text, static_cast<int>(ds.label_names.size()));
        if (inserted) {
            ds.label_names.push_back(label_text);
        }
        s.label = it->second;
        ds.samples.push_back(std::move(s));
    }
    ds.num_classes = static_cast<int>(ds.label_names.size());
    if (ds.num_classes < 2) {
        throw ConfigError("CSV has a single class; at least 2 are required");
    }
    return ds;
}

Dataset load_csv(const std::filesystem::path& path, const LabelColumn& label_column) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open CSV file " + path.string());
    }
    return parse_csv(in, label_column, path.stem().string());
}

FeatureScaling FeatureScaling::fit(const Dataset& dataset) {
    dataset.validate();
    FeatureScaling s;
    s.min = dataset.samples.front().features;
    s.max = dataset.samples.front().features;
    for (const auto& sample : dataset.samples) {
        for (std::size_t j = 0; j < dataset.feature_dim; ++j) {
            s.min[j] = std::min(s.min[j], sample.features[j]);
            s.max[j] = std::max(s.max[j], sample.features[j]);
        }
    }
    return s;
}

Dataset preprocess(const Dataset& dataset, const FeatureScaling& scaling, std::optional<int> num_qubits) {
    if (scaling.min.size() != dataset.feature_dim || scaling.max.size() != dataset.feature_dim) {
        throw StructuralError("scaling statistics do not match feature dimension");
    }
    std::size_t out_dim = dataset.feature_dim;
    if (num_qubits) {
        check_qubit_count(*num_qubits);
        out_dim = std::size_t{1} << *num_qubits;
        if (out_dim < dataset.feature_dim) {
            spdlog::warn("{}: truncating {} features to the first {} for {} qubits", dataset.name,
                         dataset.feature_dim, out_dim, *num_qubits);
        }
    }
    Dataset out;
    out.name = dataset.name;
    out.num_classes = dataset.num_classes;
    out.label_names = dataset.label_names;
    out.feature_dim = out_dim;
    out.samples.reserve(dataset.samples.size());
    const std::size_t kept = std::min(out_dim, dataset.feature_dim);
    for (const auto& sample : dataset.samples) {
        LabeledSample s;
        s.label = sample.label;
        s.features.assign(out_dim, 0.0);
        for (std::size_t j = 0; j < kept; ++j) {
            const double span = scaling.max[j] - scaling.min[j];
            s.features[j] = span > 0.0 ? (sample.features[j] - scaling.min[j]) / span : 0.0;
        }
        out.samples.push_back(std::move(s));
    }
    return out;
}

Dataset preprocess(const Dataset& dataset, int num_qubits) {
    return preprocess(dataset, FeatureScaling::fit(dataset), num_qubits);
}

TrainTestSplit train_test_split(const Dataset& dataset, double test_fraction, std::uint64_t seed) {
    dataset.validate();
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ConfigError("test_fraction must be in (0, 1)");
    }
    const std::size_t n = dataset.size();
    if (n < 2) {
        throw ConfigError("dataset needs at least 2 samples to split");
    }
    auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
    n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_rng(seed, Stream::kSplit);
    std::shuffle(order.begin(), order.end(), rng);

    auto subset = [&](std::size_t begin, std::size_t end) {
        Dataset ds;
        ds.name = dataset.name;
        ds.num_classes = dataset.num_classes;
        ds.feature_dim = dataset.feature_dim;
        ds.label_names = dataset.label_names;
        for (std::size_t i = begin; i < end; ++i) {
            ds.samples.push_back(dataset.samples[order[i]]);
        }
        return ds;
    };
    return TrainTestSplit{subset(n_test, n), subset(0, n_test)};
}

std::vector<std::vector<std::size_t>> partition(const Dataset& dataset, const PartitionPlan& plan) {
    const std::size_t n = dataset.size();
    if (plan.num_clients < 1) {
        throw ConfigError("num_clients must be >= 1");
    }
    if (plan.num_clients > kMaxClients) {
        throw ConfigError("num_clients must be <= " + std::to_string(kMaxClients) + ", got " +
                          std::to_string(plan.num_clients));
    }
    const auto clients = static_cast<std::size_t>(plan.num_clients);
    if (clients > n) {
        throw ConfigError("num_clients (" + std::to_string(clients) + ") exceeds dataset size (" + std::to_string(n) +
                          ")");
    }
    Rng rng = make_rng(plan.seed, Stream::kPartition);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    // Cuts `order` into `pieces` contiguous runs whose sizes differ by <= 1.
    auto cut = [&order](std::size_t pieces) {
        std::vector<std::vector<std::size_t>> runs(pieces);
        const std::size_t base = order.size() / pieces;
        const std::size_t extra = order.size() % pieces;
        std::size_t pos = 0;
        for (std::size_t p = 0; p < pieces; ++p) {
            const std::size_t len = base + (p < extra ? 1 : 0);
            runs[p].assign(order.begin() + static_cast<long>(pos), order.begin() + static_cast<long>(pos + len));
            pos += len;
        }
        return runs;
    };

    if (plan.mode == PartitionMode::kIid) {
        std::shuffle(order.begin(), order.end(), rng);
        return cut(clients);
    }

    if (plan.shards_per_client < 1) {
        throw ConfigError("shards_per_client must be >= 1");
    }
    const std::size_t per_client = static_cast<std::size_t>(plan.shards_per_client);
    const std::size_t shard_count = clients * per_client;
    if (shard_count > n) {
        throw ConfigError("num_clients * shards_per_client (" + std::to_string(shard_count) +
                          ") exceeds dataset size (" + std::to_string(n) + ")");
    }
    std::stable_sort(order.begin(), order.end(), [&dataset](std::size_t a, std::size_t b) {
        return dataset.samples[a].label < dataset.samples[b].label;
    });
    const auto shards = cut(shard_count);
    std::vector<std::size_t> deal(shard_count);
    std::iota(deal.begin(), deal.end(), std::size_t{0});
    std::shuffle(deal.begin(), deal.end(), rng);
    std::vector<std::vector<std::size_t>> out(clients);
    for (std::size_t c = 0; c < clients; ++c) {
        for (std::size_t k = 0; k < per_client; ++k) {
            const auto& shard = shards[deal[c * per_client + k]];
            out[c].insert(out[c].end(), shard.begin(), shard.end());
        }
    }
    return out;
}

std::vector<LabeledSample> gather(const Dataset& dataset, std::span<const std::size_t> indices) {
    std::vector<LabeledSample> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) {
        out.push_back(dataset.samples.at(i));
    }
    return out;
}

}  // namespace qfl
