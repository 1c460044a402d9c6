#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vaecf {

struct Interaction {
    std::string user_id;
    std::string item_id;
    std::optional<double> rating;
    std::optional<std::int64_t> timestamp;
};

struct RawInteractions {
    std::vector<Interaction> records;
};

/// Column layout of a delimited interaction log.
struct FormatConfig {
    char delimiter = ',';
    bool has_header = false;
    int user_column = 0;
    int item_column = 1;
    std::optional<int> rating_column;
    std::optional<int> timestamp_column;

    /// Builds a layout from a role list such as "user,item,rating,ts". Roles are
    /// user, item, rating, ts (or timestamp); any other name marks an ignored
    /// column. Throws ConfigError when user or item is missing.
    static FormatConfig from_roles(const std::string& roles, char delimiter = ',',
                                   bool has_header = false);
};

RawInteractions ingest(const std::filesystem::path& path, const FormatConfig& format);
RawInteractions ingest_text(const std::string& text, const FormatConfig& format);

/// Binarized user-by-item click matrix in CSR form. Immutable once built; the
/// constructor checks every structural invariant.
class SparseClicks {
public:
    SparseClicks() : row_offsets_{0} {}
    SparseClicks(std::size_t n_items, std::vector<std::uint64_t> row_offsets,
                 std::vector<std::uint32_t> col_indices, std::vector<std::string> user_ids,
                 std::vector<std::string> item_ids);

    /// Rows must each be strictly increasing.
    static SparseClicks from_rows(std::size_t n_items, const std::vector<std::vector<std::uint32_t>>& rows,
                                  std::vector<std::string> user_ids, std::vector<std::string> item_ids);

    std::size_t n_users() const { return row_offsets_.size() - 1; }
    std::size_t n_items() const { return n_items_; }
    std::size_t nnz() const { return col_indices_.size(); }
    double density() const;

    std::span<const std::uint32_t> row(std::size_t user) const {
        return {col_indices_.data() + row_offsets_[user],
                static_cast<std::size_t>(row_offsets_[user + 1] - row_offsets_[user])};
    }
    std::size_t row_length(std::size_t user) const {
        return static_cast<std::size_t>(row_offsets_[user + 1] - row_offsets_[user]);
    }

    /// Number of users that clicked each item.
    std::vector<std::uint64_t> item_counts() const;

    const std::vector<std::uint64_t>& row_offsets() const { return row_offsets_; }
    const std::vector<std::uint32_t>& col_indices() const { return col_indices_; }
    const std::vector<std::string>& user_ids() const { return user_ids_; }
    const std::vector<std::string>& item_ids() const { return item_ids_; }

    friend bool operator==(const SparseClicks&, const SparseClicks&) = default;

private:
    std::size_t n_items_ = 0;
    std::vector<std::uint64_t> row_offsets_;
    std::vector<std::uint32_t> col_indices_;
    std::vector<std::string> user_ids_;
    std::vector<std::string> item_ids_;
};

struct FilterConfig {
    double min_rating = 0.0;
    std::size_t min_user_items = 0;
    std::size_t min_item_users = 0;
};

/// Keeps ratings >= min_rating, collapses duplicate (user, item) pairs, then
/// alternately drops under-active users and under-clicked items until neither
/// pass removes anything. Dense ids follow first appearance in the log.
SparseClicks binarize_and_filter(const RawInteractions& raw, const FilterConfig& filter);

struct UserSplit {
    SparseClicks train;
    SparseClicks validation;
    SparseClicks test;
    /// Held-out users whose every click was on an item no training user clicked.
    std::size_t dropped_users = 0;
    /// Clicks removed from held-out rows because the item is absent from training.
    std::size_t dropped_clicks = 0;
};

/// Strong-generalization user split. The item space of all three parts is the
/// set of items with at least one training click, re-indexed in original order.
UserSplit split_users(const SparseClicks& clicks, std::size_t n_validation, std::size_t n_test,
                      std::uint64_t seed);

/// Fold-in / held-out partition of a held-out user set. `users[k]` is the row of
/// the source corpus that `fold_in[k]` and `held_out[k]` describe.
struct EvalSplit {
    std::vector<std::uint32_t> users;
    std::vector<std::vector<std::uint32_t>> fold_in;
    std::vector<std::vector<std::uint32_t>> held_out;
    std::size_t dropped_users = 0;

    std::size_t size() const { return users.size(); }
};

/// round(fraction * N_u), half rounded up.
std::size_t fold_in_size(std::size_t n_clicks, double fraction);

EvalSplit make_fold_in(const SparseClicks& heldout, double fraction, std::uint64_t seed);

void write_clicks(const std::filesystem::path& path, const SparseClicks& clicks);
std::vector<std::uint8_t> encode_clicks(const SparseClicks& clicks);
SparseClicks read_clicks(const std::filesystem::path& path);
SparseClicks decode_clicks(std::span<const std::uint8_t> bytes, const std::string& source = "<memory>");

}  // namespace vaecf
