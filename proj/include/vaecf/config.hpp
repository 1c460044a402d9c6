#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vaecf/corpus.hpp"
#include "vaecf/model.hpp"
#include "vaecf/trainer.hpp"

namespace vaecf {

struct ConfigKey {
    const char* name;
    const char* default_value;  // nullptr: required when read
    const char* help;
};

/// Every key RunConfig accepts, with defaults.
const std::vector<ConfigKey>& config_keys();

/// Flat `key = value` configuration. Unknown keys are rejected.
class RunConfig {
public:
    RunConfig() = default;

    static RunConfig from_file(const std::filesystem::path& path);
    /// `#` starts a comment; blank lines are ignored.
    static RunConfig from_text(const std::string& text, const std::string& source = "<config>");

    void set(const std::string& key, const std::string& value);
    /// Overrides any key from environment variables named prefix + KEY with
    /// '.' replaced by '_' and upper-cased, e.g. VAECF_TRAIN_EPOCHS.
    void apply_environment(const std::string& prefix = "VAECF_");

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<std::size_t> get_size_list(const std::string& key) const;

    const std::map<std::string, std::string>& overrides() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

FormatConfig format_config_from(const RunConfig& config);
FilterConfig filter_config_from(const RunConfig& config);
ModelSpec model_spec_from(const RunConfig& config, std::size_t n_items);
TrainConfig train_config_from(const RunConfig& config, ModelKind kind);

}  // namespace vaecf
