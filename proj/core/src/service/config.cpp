#include "qfl/service/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>

namespace qfl::service {

using nlohmann::json;

ValidationError::ValidationError(std::vector<FieldError> errors)
    : ConfigError([&] {
          std::string what = "invalid configuration:";
          for (const auto& e : errors) {
              what += "\n  " + (e.field.empty() ? std::string("<document>") : e.field) + ": " + e.message;
          }
          return what;
      }()),
      errors_(std::move(errors)) {}

ValidationError::ValidationError(std::string field, std::string message)
    : ValidationError(std::vector<FieldError>{{std::move(field), std::move(message)}}) {}

json ValidationError::to_json() const {
    json list = json::array();
    for (const auto& e : errors_) {
        list.push_back({{"field", e.field}, {"message", e.message}});
    }
    return {{"error", "validation failed"}, {"errors", list}};
}

namespace {

// Pulls typed fields out of one JSON object, recording every problem and
// every key it was asked about so leftovers can be reported as unknown.
class FieldReader {
  public:
    FieldReader(const json& obj, std::string prefix, std::vector<FieldError>& errors)
        : obj_(obj), prefix_(std::move(prefix)), errors_(errors) {}

    [[nodiscard]] std::string path(const std::string& key) const { return prefix_ + key; }

    void fail(const std::string& key, const std::string& message) { errors_.push_back({path(key), message}); }

    [[nodiscard]] bool has(const std::string& key) const { return obj_.contains(key) && !obj_.at(key).is_null(); }

    const json* raw(const std::string& key) {
        seen_.insert(key);
        if (!has(key)) {
            return nullptr;
        }
        return &obj_.at(key);
    }

    std::optional<std::int64_t> integer(const std::string& key, std::int64_t lo, std::int64_t hi) {
        const json* v = raw(key);
        if (v == nullptr) {
            return std::nullopt;
        }
        if (!v->is_number_integer()) {
            fail(key, "must be an integer");
            return std::nullopt;
        }
        if (v->is_number_unsigned() && v->get<std::uint64_t>() > static_cast<std::uint64_t>(hi)) {
            fail(key, "must be <= " + std::to_string(hi));
            return std::nullopt;
        }
        const auto x = v->get<std::int64_t>();
        if (x < lo || x > hi) {
            fail(key, "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "], got " + std::to_string(x));
            return std::nullopt;
        }
        return x;
    }

    std::optional<std::uint64_t> unsigned64(const std::string& key) {
        const json* v = raw(key);
        if (v == nullptr) {
            return std::nullopt;
        }
        if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<std::int64_t>() < 0)) {
            fail(key, "must be a non-negative integer");
            return std::nullopt;
        }
        return v->get<std::uint64_t>();
    }

    // Accepts values in the open/closed interval described by the flags.
    std::optional<double> real(const std::string& key, double lo, double hi, bool lo_open, bool hi_open) {
        const json* v = raw(key);
        if (v == nullptr) {
            return std::nullopt;
        }
        if (!v->is_number()) {
            fail(key, "must be a number");
            return std::nullopt;
        }
        const double x = v->get<double>();
        const bool ok = std::isfinite(x) && (lo_open ? x > lo : x >= lo) && (hi_open ? x < hi : x <= hi);
        if (!ok) {
            fail(key, std::string("must be in ") + (lo_open ? "(" : "[") + json(lo).dump() + ", " +
                          (std::isinf(hi) ? std::string("inf") : json(hi).dump()) + (hi_open ? ")" : "]"));
            return std::nullopt;
        }
        return x;
    }

    std::optional<std::string> string(const std::string& key) {
        const json* v = raw(key);
        if (v == nullptr) {
            return std::nullopt;
        }
        if (!v->is_string()) {
            fail(key, "must be a string");
            return std::nullopt;
        }
        return v->get<std::string>();
    }

    std::optional<bool> boolean(const std::string& key) {
        const json* v = raw(key);
        if (v == nullptr) {
            return std::nullopt;
        }
        if (!v->is_boolean()) {
            fail(key, "must be true or false");
            return std::nullopt;
        }
        return v->get<bool>();
    }

    template <typename Enum>
    std::optional<Enum> choice(const std::string& key, std::initializer_list<std::pair<const char*, Enum>> options) {
        const auto text = string(key);
        if (!text) {
            return std::nullopt;
        }
        std::string names;
        for (const auto& [name, value] : options) {
            if (*text == name) {
                return value;
            }
            names += (names.empty() ? "" : ", ") + std::string(name);
        }
        fail(key, "must be one of " + names + ", got '" + *text + "'");
        return std::nullopt;
    }

    void reject_unknown() {
        for (const auto& item : obj_.items()) {
            if (!seen_.contains(item.key())) {
                fail(item.key(), "unknown field");
            }
        }
    }

  private:
    const json& obj_;
    std::string prefix_;
    std::vector<FieldError>& errors_;
    std::set<std::string> seen_;
};

DatasetRef parse_dataset(const json& value, std::vector<FieldError>& errors) {
    DatasetRef ref;
    if (value.is_string()) {
        ref.name = value.get<std::string>();
        if (!is_builtin_dataset(ref.name)) {
            errors.push_back({"dataset", "unknown builtin dataset '" + ref.name + "'"});
        }
        return ref;
    }
    if (!value.is_object()) {
        errors.push_back({"dataset", "must be a dataset name or an object"});
        return ref;
    }
    FieldReader r(value, "dataset.", errors);
    const auto name = r.string("name");
    if (!name) {
        if (!r.has("name")) {
            r.fail("name", "is required");
        }
        r.reject_unknown();
        return ref;
    }
    ref.name = *name;
    if (ref.name == "synthetic_blobs") {
        if (auto v = r.integer("num_classes", 1, 1 << kMaxQubits)) {
            ref.blobs.num_classes = static_cast<int>(*v);
        }
        if (auto v = r.integer("num_features", 1, 1 << 20)) {
            ref.blobs.num_features = static_cast<std::size_t>(*v);
        }
        if (auto v = r.integer("num_samples", 2, 10'000'000)) {
            ref.blobs.num_samples = static_cast<std::size_t>(*v);
        }
        if (auto v = r.unsigned64("seed")) {
            ref.blobs.seed = *v;
        }
    } else if (ref.name == "csv") {
        ref.path = r.string("path");
        if (!r.has("path")) {
            r.fail("path", "is required for csv datasets");
        }
        if (const json* col = r.raw("label_column")) {
            if (col->is_string()) {
                ref.label_column = col->get<std::string>();
            } else if (col->is_number_integer() && col->get<std::int64_t>() >= 0) {
                ref.label_column = col->get<std::size_t>();
            } else {
                r.fail("label_column", "must be a column name or a zero-based index");
            }
        } else {
            r.fail("label_column", "is required for csv datasets");
        }
    } else if (ref.name == "upload") {
        ref.upload_id = r.string("id");
        if (!r.has("id")) {
            r.fail("id", "is required for uploaded datasets");
        }
    } else if (!is_builtin_dataset(ref.name)) {
        r.fail("name", "unknown dataset '" + ref.name + "'");
    }
    r.reject_unknown();
    return ref;
}

}  // namespace

RunConfig parse_run_config(const json& doc) {
    std::vector<FieldError> errors;
    if (!doc.is_object()) {
        throw ValidationError("", "configuration must be a JSON object");
    }
    RunConfig cfg;
    SimulationConfig& sim = cfg.sim;
    FieldReader r(doc, "", errors);

    if (auto v = r.choice<Framework>("framework", {{"QFL", Framework::kQfl}, {"CLASSICAL_FL", Framework::kClassicalFl}})) {
        sim.framework = *v;
    }
    if (const json* ds = r.raw("dataset")) {
        cfg.dataset = parse_dataset(*ds, errors);
    }
    if (auto v = r.integer("num_clients", 1, kMaxClients)) {
        sim.num_clients = static_cast<int>(*v);
    }
    if (auto v = r.integer("global_rounds", 1, 1'000'000)) {
        sim.global_rounds = static_cast<int>(*v);
    }
    if (auto v = r.integer("local_epochs", 1, 1'000'000)) {
        sim.hyper.local_epochs = static_cast<int>(*v);
    }
    if (auto v = r.real("learning_rate", 0.0, std::numeric_limits<double>::infinity(), true, true)) {
        sim.hyper.learning_rate = *v;
    }
    if (auto v = r.integer("batch_size", 1, 1'000'000)) {
        sim.hyper.batch_size = static_cast<int>(*v);
    }

    const bool quantum = sim.framework == Framework::kQfl;
    for (const char* key : {"num_qubits", "num_layers"}) {
        if (quantum && !r.has(key)) {
            r.fail(key, "is required when framework is QFL");
        } else if (!quantum && r.has(key)) {
            r.fail(key, "only applies when framework is QFL");
        }
    }
    if (quantum) {
        if (auto v = r.integer("num_qubits", 1, kMaxQubits)) {
            sim.num_qubits = static_cast<int>(*v);
        }
        if (auto v = r.integer("num_layers", 1, 1000)) {
            sim.num_layers = static_cast<int>(*v);
        }
    } else {
        (void)r.raw("num_qubits");
        (void)r.raw("num_layers");
    }

    if (const json* shots = r.raw("shots")) {
        if (shots->is_string() && shots->get<std::string>() == "EXACT") {
            sim.hyper.shots.reset();
        } else if (shots->is_number_integer() && shots->get<std::int64_t>() >= 1) {
            sim.hyper.shots = shots->get<std::uint64_t>();
        } else {
            r.fail("shots", "must be \"EXACT\" or a positive integer");
        }
    }
    if (auto v = r.choice<OptimizerKind>("optimizer", {{"ADAM", OptimizerKind::kAdam}, {"SGD", OptimizerKind::kSgd}})) {
        sim.hyper.optimizer = *v;
    }
    if (auto v = r.real("adam_beta1", 0.0, 1.0, true, true)) {
        sim.hyper.adam_beta1 = *v;
    }
    if (auto v = r.real("adam_beta2", 0.0, 1.0, true, true)) {
        sim.hyper.adam_beta2 = *v;
    }
    if (auto v = r.real("adam_eps", 0.0, 1.0, true, false)) {
        sim.hyper.adam_eps = *v;
    }
    if (auto v = r.choice<PartitionMode>(
            "partition", {{"IID", PartitionMode::kIid}, {"NONIID_LABEL_SKEW", PartitionMode::kNonIidLabelSkew}})) {
        sim.partition = *v;
    }
    if (auto v = r.integer("shards_per_client", 1, 100000)) {
        sim.shards_per_client = static_cast<int>(*v);
    }
    if (const json* noise = r.raw("noise")) {
        if (!noise->is_object()) {
            r.fail("noise", "must be an object");
        } else {
            FieldReader n(*noise, "noise.", errors);
            const auto enabled = n.boolean("enabled");
            if (auto v = n.real("depolarizing_p", 0.0, 1.0, false, false)) {
                sim.noise.depolarizing_p = *v;
            }
            if (auto v = n.real("readout_flip_p", 0.0, 1.0, false, false)) {
                sim.noise.readout_flip_p = *v;
            }
            sim.noise.enabled = enabled.value_or(sim.noise.depolarizing_p > 0.0 || sim.noise.readout_flip_p > 0.0);
            n.reject_unknown();
        }
    }
    if (auto v = r.unsigned64("seed")) {
        sim.seed = *v;
    }
    if (auto v = r.real("test_fraction", 0.0, 1.0, true, true)) {
        sim.test_fraction = *v;
    }
    if (auto v = r.integer("max_parallel_clients", 0, 1024)) {
        sim.max_parallel_clients = static_cast<int>(*v);
    }
    if (auto v = r.boolean("record_wall_time")) {
        cfg.record_wall_time = *v;
    }
    r.reject_unknown();

    if (!errors.empty()) {
        throw ValidationError(std::move(errors));
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("", "cannot open config file " + path.string());
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("", std::string("config is not valid JSON: ") + e.what());
    }
    return parse_run_config(doc);
}

json to_json(const RunConfig& config) {
    const SimulationConfig& sim = config.sim;
    json ds;
    ds["name"] = config.dataset.name;
    if (config.dataset.name == "synthetic_blobs") {
        ds["num_classes"] = config.dataset.blobs.num_classes;
        ds["num_features"] = config.dataset.blobs.num_features;
        ds["num_samples"] = config.dataset.blobs.num_samples;
        ds["seed"] = config.dataset.blobs.seed;
    } else if (config.dataset.name == "csv") {
        ds["path"] = config.dataset.path.value_or("");
        if (config.dataset.label_column) {
            std::visit([&ds](const auto& col) { ds["label_column"] = col; }, *config.dataset.label_column);
        }
    } else if (config.dataset.name == "upload") {
        ds["id"] = config.dataset.upload_id.value_or("");
    }

    json doc = {
        {"framework", to_string(sim.framework)},
        {"dataset", ds},
        {"num_clients", sim.num_clients},
        {"global_rounds", sim.global_rounds},
        {"local_epochs", sim.hyper.local_epochs},
        {"learning_rate", sim.hyper.learning_rate},
        {"batch_size", sim.hyper.batch_size},
        {"optimizer", sim.hyper.optimizer == OptimizerKind::kAdam ? "ADAM" : "SGD"},
        {"adam_beta1", sim.hyper.adam_beta1},
        {"adam_beta2", sim.hyper.adam_beta2},
        {"adam_eps", sim.hyper.adam_eps},
        {"partition", sim.partition == PartitionMode::kIid ? "IID" : "NONIID_LABEL_SKEW"},
        {"shards_per_client", sim.shards_per_client},
        {"noise",
         {{"enabled", sim.noise.enabled},
          {"depolarizing_p", sim.noise.depolarizing_p},
          {"readout_flip_p", sim.noise.readout_flip_p}}},
        {"seed", sim.seed},
        {"test_fraction", sim.test_fraction},
        {"max_parallel_clients", sim.max_parallel_clients},
        {"record_wall_time", config.record_wall_time},
    };
    if (sim.hyper.shots) {
        doc["shots"] = *sim.hyper.shots;
    } else {
        doc["shots"] = "EXACT";
    }
    if (sim.framework == Framework::kQfl) {
        doc["num_qubits"] = sim.num_qubits.value_or(0);
        doc["num_layers"] = sim.num_layers.value_or(0);
    }
    return doc;
}

bool equivalent(const RunConfig& a, const RunConfig& b) { return to_json(a) == to_json(b); }

DataBundle resolve_dataset(const DatasetRef& ref, const DatasetLocations& where) {
    try {
        if (ref.name == "csv") {
            return DataBundle{load_csv(ref.path.value_or(""), ref.label_column.value_or(LabelColumn{std::size_t{0}})),
                              std::nullopt};
        }
        if (ref.name == "upload") {
            const std::string id = ref.upload_id.value_or("");
            if (id.empty() || id.find_first_of("/\\.") != std::string::npos) {
                throw ConfigError("invalid upload id '" + id + "'");
            }
            const auto meta_path = where.uploads_dir / (id + ".json");
            std::ifstream meta_in(meta_path);
            if (!meta_in) {
                throw ConfigError("unknown upload id '" + id + "'");
            }
            const json meta = json::parse(meta_in);
            LabelColumn column = meta.at("label_column").is_string()
                                     ? LabelColumn{meta.at("label_column").get<std::string>()}
                                     : LabelColumn{meta.at("label_column").get<std::size_t>()};
            auto ds = load_csv(where.uploads_dir / (id + ".csv"), column);
            ds.name = meta.value("filename", id);
            return DataBundle{std::move(ds), std::nullopt};
        }
        BuiltinOptions options;
        options.blobs = ref.blobs;
        options.data_dir = where.data_dir;
        return load_builtin(ref.name, options);
    } catch (const ValidationError&) {
        throw;
    } catch (const Error& e) {
        throw ValidationError("dataset", e.what());
    } catch (const json::exception& e) {
        throw ValidationError("dataset", std::string("corrupt upload metadata: ") + e.what());
    }
}

void check_compatibility(const RunConfig& config, const DataBundle& data) {
    std::vector<FieldError> errors;
    const SimulationConfig& sim = config.sim;
    int classes = data.train.num_classes;
    if (data.test) {
        classes = std::max(classes, data.test->num_classes);
    }
    if (sim.framework == Framework::kQfl && sim.num_qubits) {
        const auto outcomes = std::size_t{1} << *sim.num_qubits;
        if (static_cast<std::size_t>(classes) > outcomes) {
            errors.push_back({"num_qubits", "num_classes exceeds 2^Q: dataset has " + std::to_string(classes) +
                                                " classes, need at least " +
                                                std::to_string(qubits_for(static_cast<std::size_t>(classes))) +
                                                " qubits"});
        }
    }
    std::size_t train_rows = data.train.size();
    if (!data.test) {
        const auto n = data.train.size();
        const auto n_test = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::llround(static_cast<double>(n) * sim.test_fraction)), 1, n > 1 ? n - 1 : 1);
        train_rows = n > n_test ? n - n_test : 0;
    }
    if (static_cast<std::size_t>(sim.num_clients) > train_rows) {
        errors.push_back({"num_clients", "exceeds the " + std::to_string(train_rows) + " training samples"});
    } else if (sim.partition == PartitionMode::kNonIidLabelSkew &&
               static_cast<std::size_t>(sim.num_clients) * static_cast<std::size_t>(sim.shards_per_client) >
                   train_rows) {
        errors.push_back({"shards_per_client", "num_clients * shards_per_client exceeds the " +
                                                   std::to_string(train_rows) + " training samples"});
    }
    if (!errors.empty()) {
        throw ValidationError(std::move(errors));
    }
}

}  // namespace qfl::service
