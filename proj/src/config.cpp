#include "vaecf/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "vaecf/error.hpp"

namespace vaecf {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

const ConfigKey* find_key(const std::string& key) {
    for (const auto& k : config_keys()) {
        if (key == k.name) return &k;
    }
    return nullptr;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
        {"data.raw", nullptr, "raw delimited interaction log"},
        {"data.delimiter", ",", "field delimiter of the raw log (single character, or 'tab')"},
        {"data.header", "false", "raw log starts with a header line"},
        {"data.columns", "user,item,rating,ts", "column roles of the raw log"},
        {"data.corpus", "corpus.mrcx", "preprocessed click corpus"},
        {"data.split_dir", "split", "directory holding train/validation/test corpora"},
        {"filter.min_rating", "4", "keep ratings >= this value"},
        {"filter.min_user_items", "5", "drop users with fewer clicks"},
        {"filter.min_item_users", "0", "drop items with fewer users"},
        {"split.n_validation", "10000", "validation users"},
        {"split.n_test", "10000", "test users"},
        {"split.seed", "98765", "seed for the user split and fold-in partitions"},
        {"split.fold_in_fraction", "0.8", "fraction of a held-out user's clicks used as input"},
        {"model.kind", "vae", "vae or dae"},
        {"model.latent_dim", "200", "latent dimension K"},
        {"model.hidden_dims", "600", "comma-separated hidden layer sizes (0-2 entries, empty for none)"},
        {"model.likelihood", "multinomial", "multinomial, gaussian or logistic"},
        {"model.gaussian_c0", "1", "gaussian confidence weight for unclicked entries"},
        {"model.gaussian_c1", "2", "gaussian confidence weight for clicked entries"},
        {"model.input_keep_prob", "0.5", "input dropout keep probability"},
        {"train.batch_size", "500", "users per update"},
        {"train.epochs", "200", "passes over the training users"},
        {"train.eval_every", "0", "validate every N updates (0: once per epoch)"},
        {"train.seed", "12345", "seed for initialization, shuffling, dropout and eps"},
        {"train.lr", "0.001", "Adam learning rate"},
        {"train.adam_beta1", "0.9", "Adam first-moment decay"},
        {"train.adam_beta2", "0.999", "Adam second-moment decay"},
        {"train.adam_epsilon", "1e-8", "Adam epsilon"},
        {"train.weight_decay", "auto", "L2 strength; auto = 0.01 for dae, 0 for vae"},
        {"train.decoupled_weight_decay", "false", "apply decay in the optimizer instead of the objective"},
        {"train.checkpoint", "model.ckpt", "best-model checkpoint path"},
        {"train.report", "train_report.csv", "training history table"},
        {"train.validation_metric", "ndcg@100", "metric used to pick the best model"},
        {"anneal.total_steps", "200000", "updates over which beta rises linearly to its cap"},
        {"anneal.cap", "1.0", "upper bound on beta"},
        {"anneal.mode", "linear", "linear or constant (beta = cap throughout)"},
        {"anneal.two_phase", "false", "search for the best beta, then retrain capped at it"},
        {"anneal.patience", "0", "budget mode: freeze beta after this many non-improving validations"},
        {"eval.metrics", "recall@20,recall@50,ndcg@100", "metrics reported by evaluate"},
        {"eval.batch_size", "500", "users scored per batch during evaluation"},
        {"run.threads", "1", "worker threads for evaluation"},
        {"run.strict", "false", "force single-threaded deterministic execution"},
    };
    return keys;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str(), path.string());
}

RunConfig RunConfig::from_text(const std::string& text, const std::string& source) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        try {
            cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (!find_key(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
}

void RunConfig::apply_environment(const std::string& prefix) {
    for (const auto& k : config_keys()) {
        std::string env = prefix + k.name;
        std::transform(env.begin(), env.end(), env.begin(), [](unsigned char c) {
            return c == '.' ? '_' : static_cast<char>(std::toupper(c));
        });
        if (const char* v = std::getenv(env.c_str())) values_[k.name] = v;
    }
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string RunConfig::get_string(const std::string& key) const {
    const auto* k = find_key(key);
    if (!k) throw ConfigError("unknown config key '" + key + "'");
    if (auto it = values_.find(key); it != values_.end()) return it->second;
    if (!k->default_value) throw ConfigError("missing required config key '" + key + "'");
    return k->default_value;
}

double RunConfig::get_double(const std::string& key) const {
    const auto s = get_string(key);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) throw ConfigError("key '" + key + "': '" + s + "' is not a number");
    return v;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
    const auto s = get_string(key);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ConfigError("key '" + key + "': '" + s + "' is not a non-negative integer");
    }
    return v;
}

bool RunConfig::get_bool(const std::string& key) const {
    const auto s = get_string(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("key '" + key + "': '" + s + "' is not a boolean");
}

std::vector<std::size_t> RunConfig::get_size_list(const std::string& key) const {
    std::vector<std::size_t> out;
    std::stringstream ss(get_string(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        std::size_t v = 0;
        auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || ptr != item.data() + item.size()) {
            throw ConfigError("key '" + key + "': '" + item + "' is not a count");
        }
        out.push_back(v);
    }
    return out;
}

FormatConfig format_config_from(const RunConfig& config) {
    const auto delim = config.get_string("data.delimiter");
    char d = ',';
    if (delim == "tab" || delim == "\\t") {
        d = '\t';
    } else if (delim.size() == 1) {
        d = delim[0];
    } else {
        throw ConfigError("data.delimiter must be a single character or 'tab'");
    }
    return FormatConfig::from_roles(config.get_string("data.columns"), d, config.get_bool("data.header"));
}

FilterConfig filter_config_from(const RunConfig& config) {
    FilterConfig f;
    f.min_rating = config.get_double("filter.min_rating");
    f.min_user_items = config.get_u64("filter.min_user_items");
    f.min_item_users = config.get_u64("filter.min_item_users");
    return f;
}

ModelSpec model_spec_from(const RunConfig& config, std::size_t n_items) {
    ModelSpec spec;
    spec.kind = parse_model_kind(config.get_string("model.kind"));
    spec.n_items = n_items;
    spec.latent_dim = config.get_u64("model.latent_dim");
    spec.hidden_dims = config.get_size_list("model.hidden_dims");
    spec.likelihood.type = parse_likelihood(config.get_string("model.likelihood"));
    spec.likelihood.c0 = config.get_double("model.gaussian_c0");
    spec.likelihood.c1 = config.get_double("model.gaussian_c1");
    spec.input_keep_prob = config.get_double("model.input_keep_prob");
    spec.validate();
    return spec;
}

TrainConfig train_config_from(const RunConfig& config, ModelKind kind) {
    TrainConfig t;
    t.batch_size = config.get_u64("train.batch_size");
    t.epochs = config.get_u64("train.epochs");
    t.eval_every = config.get_u64("train.eval_every");
    t.seed = config.get_u64("train.seed");
    t.adam.lr = config.get_double("train.lr");
    t.adam.beta1 = config.get_double("train.adam_beta1");
    t.adam.beta2 = config.get_double("train.adam_beta2");
    t.adam.epsilon = config.get_double("train.adam_epsilon");

    double decay = 0.0;
    if (const auto wd = config.get_string("train.weight_decay"); wd == "auto") {
        decay = kind == ModelKind::kDae ? 0.01 : 0.0;
    } else {
        decay = config.get_double("train.weight_decay");
    }
    if (config.get_bool("train.decoupled_weight_decay")) {
        t.adam.decoupled_weight_decay = decay;
    } else {
        t.weight_decay = decay;
    }

    t.anneal.total_anneal_steps = config.get_u64("anneal.total_steps");
    t.anneal.beta_cap = config.get_double("anneal.cap");
    const auto mode = config.get_string("anneal.mode");
    if (mode == "constant") {
        t.anneal.total_anneal_steps = 0;
    } else if (mode != "linear") {
        throw ConfigError("anneal.mode must be linear or constant");
    }
    t.anneal_patience = config.get_u64("anneal.patience");
    t.validation_metric = parse_metric(config.get_string("train.validation_metric"));
    t.eval_batch_size = config.get_u64("eval.batch_size");
    t.eval_threads = config.get_bool("run.strict") ? 1 : config.get_u64("run.threads");
    t.checkpoint_path = config.get_string("train.checkpoint");
    t.validate();
    return t;
}

}  // namespace vaecf
