#include "vaecf/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>
#include <unordered_map>

#include "vaecf/error.hpp"
#include "vaecf/io.hpp"
#include "vaecf/rng.hpp"

namespace vaecf {

namespace {

constexpr char kClicksMagic[4] = {'M', 'R', 'C', 'X'};
constexpr std::uint32_t kClicksVersion = 1;

// Stream ids for derive_seed.
constexpr std::uint64_t kStreamUserSplit = 0x5350;
constexpr std::uint64_t kStreamFoldIn = 0x464f;

std::string_view trim(std::string_view s) {
    const auto not_space = [](char c) { return c != ' ' && c != '\t' && c != '\r' && c != '\n'; };
    auto b = std::find_if(s.begin(), s.end(), not_space);
    auto e = std::find_if(s.rbegin(), std::string_view::reverse_iterator(b), not_space).base();
    return {b, static_cast<std::size_t>(e - b)};
}

std::vector<std::string_view> split_fields(std::string_view line, char delimiter) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(delimiter, start);
        if (pos == std::string_view::npos) {
            fields.push_back(trim(line.substr(start)));
            break;
        }
        fields.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return fields;
}

template <typename T>
bool parse_number(std::string_view field, T& out) {
    const auto* end = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(field.data(), end, out);
    return ec == std::errc() && ptr == end;
}

void parse_stream(std::istream& in, const FormatConfig& format, RawInteractions& out) {
    int needed = std::max(format.user_column, format.item_column);
    if (format.rating_column) needed = std::max(needed, *format.rating_column);
    if (format.timestamp_column) needed = std::max(needed, *format.timestamp_column);

    std::string line;
    std::size_t line_no = 0;
    bool header_pending = format.has_header;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        if (header_pending) {
            header_pending = false;
            continue;
        }
        const auto fields = split_fields(line, format.delimiter);
        if (static_cast<int>(fields.size()) <= needed) {
            throw ParseError("expected at least " + std::to_string(needed + 1) + " fields, got " +
                                 std::to_string(fields.size()),
                             line_no);
        }
        Interaction rec;
        rec.user_id = std::string(fields[format.user_column]);
        rec.item_id = std::string(fields[format.item_column]);
        if (rec.user_id.empty()) throw ParseError("empty user id", line_no);
        if (rec.item_id.empty()) throw ParseError("empty item id", line_no);
        if (format.rating_column) {
            double rating = 0.0;
            const auto field = fields[*format.rating_column];
            if (!parse_number(field, rating) || !std::isfinite(rating)) {
                throw ParseError("invalid rating '" + std::string(field) + "'", line_no);
            }
            rec.rating = rating;
        }
        if (format.timestamp_column) {
            std::int64_t ts = 0;
            const auto field = fields[*format.timestamp_column];
            if (!parse_number(field, ts)) {
                throw ParseError("invalid timestamp '" + std::string(field) + "'", line_no);
            }
            rec.timestamp = ts;
        }
        out.records.push_back(std::move(rec));
    }
}

}  // namespace

FormatConfig FormatConfig::from_roles(const std::string& roles, char delimiter, bool has_header) {
    FormatConfig cfg;
    cfg.delimiter = delimiter;
    cfg.has_header = has_header;
    std::optional<int> user, item;
    int column = 0;
    for (auto role : split_fields(roles, ',')) {
        if (role == "user") {
            user = column;
        } else if (role == "item") {
            item = column;
        } else if (role == "rating") {
            cfg.rating_column = column;
        } else if (role == "ts" || role == "timestamp") {
            cfg.timestamp_column = column;
        }
        ++column;
    }
    if (!user) throw ConfigError("column roles '" + roles + "' lack a 'user' column");
    if (!item) throw ConfigError("column roles '" + roles + "' lack an 'item' column");
    cfg.user_column = *user;
    cfg.item_column = *item;
    return cfg;
}

RawInteractions ingest(const std::filesystem::path& path, const FormatConfig& format) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    RawInteractions out;
    parse_stream(in, format, out);
    return out;
}

RawInteractions ingest_text(const std::string& text, const FormatConfig& format) {
    std::istringstream in(text);
    RawInteractions out;
    parse_stream(in, format, out);
    return out;
}

SparseClicks::SparseClicks(std::size_t n_items, std::vector<std::uint64_t> row_offsets,
                           std::vector<std::uint32_t> col_indices, std::vector<std::string> user_ids,
                           std::vector<std::string> item_ids)
    : n_items_(n_items),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      user_ids_(std::move(user_ids)),
      item_ids_(std::move(item_ids)) {
    if (row_offsets_.empty() || row_offsets_.front() != 0) {
        throw DataError("row_offsets must start at 0");
    }
    if (row_offsets_.back() != col_indices_.size()) {
        throw DataError("row_offsets end does not match interaction count");
    }
    if (user_ids_.size() != n_users()) throw DataError("user id table size mismatch");
    if (item_ids_.size() != n_items_) throw DataError("item id table size mismatch");
    for (std::size_t u = 0; u < n_users(); ++u) {
        if (row_offsets_[u + 1] < row_offsets_[u]) throw DataError("row_offsets decreasing");
        const auto r = row(u);
        for (std::size_t k = 0; k < r.size(); ++k) {
            if (r[k] >= n_items_) throw DataError("column index out of range");
            if (k > 0 && r[k] <= r[k - 1]) throw DataError("row columns not strictly increasing");
        }
    }
}

SparseClicks SparseClicks::from_rows(std::size_t n_items,
                                     const std::vector<std::vector<std::uint32_t>>& rows,
                                     std::vector<std::string> user_ids,
                                     std::vector<std::string> item_ids) {
    std::vector<std::uint64_t> offsets{0};
    std::vector<std::uint32_t> cols;
    for (const auto& r : rows) {
        cols.insert(cols.end(), r.begin(), r.end());
        offsets.push_back(cols.size());
    }
    return SparseClicks(n_items, std::move(offsets), std::move(cols), std::move(user_ids),
                        std::move(item_ids));
}

double SparseClicks::density() const {
    if (n_users() == 0 || n_items_ == 0) return 0.0;
    return static_cast<double>(nnz()) / (static_cast<double>(n_users()) * static_cast<double>(n_items_));
}

std::vector<std::uint64_t> SparseClicks::item_counts() const {
    std::vector<std::uint64_t> counts(n_items_, 0);
    for (auto i : col_indices_) ++counts[i];
    return counts;
}

SparseClicks binarize_and_filter(const RawInteractions& raw, const FilterConfig& filter) {
    if (!(filter.min_rating >= 0.0)) throw ConfigError("min_rating must be >= 0");

    std::unordered_map<std::string, std::uint32_t> user_index, item_index;
    std::vector<std::string> user_names, item_names;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    const auto intern = [](auto& index, auto& names, const std::string& id) {
        auto [it, inserted] = index.try_emplace(id, static_cast<std::uint32_t>(names.size()));
        if (inserted) names.push_back(id);
        return it->second;
    };
    for (const auto& rec : raw.records) {
        if (rec.rating && *rec.rating < filter.min_rating) continue;
        pairs.emplace_back(intern(user_index, user_names, rec.user_id),
                           intern(item_index, item_names, rec.item_id));
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

    // Alternate user and item passes until a full round removes nothing.
    std::vector<std::size_t> user_count(user_names.size()), item_count(item_names.size());
    bool changed = true;
    while (changed && !pairs.empty()) {
        changed = false;
        std::fill(user_count.begin(), user_count.end(), 0);
        for (const auto& [u, i] : pairs) ++user_count[u];
        auto end = std::remove_if(pairs.begin(), pairs.end(), [&](const auto& p) {
            return user_count[p.first] < filter.min_user_items;
        });
        if (end != pairs.end()) changed = true;
        pairs.erase(end, pairs.end());

        std::fill(item_count.begin(), item_count.end(), 0);
        for (const auto& [u, i] : pairs) ++item_count[i];
        end = std::remove_if(pairs.begin(), pairs.end(), [&](const auto& p) {
            return item_count[p.second] < filter.min_item_users;
        });
        if (end != pairs.end()) changed = true;
        pairs.erase(end, pairs.end());
    }
    if (pairs.empty()) throw EmptyCorpusError("no interactions left after filtering");

    // Old ids were assigned in first-appearance order, so keeping survivors in
    // old-id order preserves it.
    constexpr auto kNone = ~std::uint32_t{0};
    std::vector<std::uint32_t> user_map(user_names.size(), kNone), item_map(item_names.size(), kNone);
    for (const auto& [u, i] : pairs) {
        user_map[u] = 0;
        item_map[i] = 0;
    }
    std::vector<std::string> users_out, items_out;
    for (std::size_t u = 0; u < user_map.size(); ++u) {
        if (user_map[u] == kNone) continue;
        user_map[u] = static_cast<std::uint32_t>(users_out.size());
        users_out.push_back(user_names[u]);
    }
    for (std::size_t i = 0; i < item_map.size(); ++i) {
        if (item_map[i] == kNone) continue;
        item_map[i] = static_cast<std::uint32_t>(items_out.size());
        items_out.push_back(item_names[i]);
    }

    std::vector<std::vector<std::uint32_t>> rows(users_out.size());
    for (const auto& [u, i] : pairs) rows[user_map[u]].push_back(item_map[i]);
    for (auto& r : rows) std::sort(r.begin(), r.end());
    const auto n_items = items_out.size();
    return SparseClicks::from_rows(n_items, rows, std::move(users_out), std::move(items_out));
}

UserSplit split_users(const SparseClicks& clicks, std::size_t n_validation, std::size_t n_test,
                      std::uint64_t seed) {
    const std::size_t n_users = clicks.n_users();
    if (n_validation + n_test >= n_users) {
        throw ConfigError("validation + test users (" + std::to_string(n_validation + n_test) +
                          ") must be fewer than total users (" + std::to_string(n_users) + ")");
    }
    Rng rng(derive_seed(seed, kStreamUserSplit));
    const auto perm = random_permutation(n_users, rng);
    const std::size_t n_train = n_users - n_validation - n_test;

    // 0 = train, 1 = validation, 2 = test
    std::vector<std::uint8_t> part(n_users);
    for (std::size_t k = 0; k < n_users; ++k) {
        part[perm[k]] = k < n_train ? 0 : (k < n_train + n_validation ? 1 : 2);
    }

    std::vector<bool> in_train(clicks.n_items(), false);
    for (std::size_t u = 0; u < n_users; ++u) {
        if (part[u] != 0) continue;
        for (auto i : clicks.row(u)) in_train[i] = true;
    }
    constexpr auto kNone = ~std::uint32_t{0};
    std::vector<std::uint32_t> item_map(clicks.n_items(), kNone);
    std::vector<std::string> item_ids;
    for (std::size_t i = 0; i < clicks.n_items(); ++i) {
        if (!in_train[i]) continue;
        item_map[i] = static_cast<std::uint32_t>(item_ids.size());
        item_ids.push_back(clicks.item_ids()[i]);
    }

    UserSplit out;
    std::vector<std::vector<std::uint32_t>> rows[3];
    std::vector<std::string> user_ids[3];
    for (std::size_t u = 0; u < n_users; ++u) {
        std::vector<std::uint32_t> row;
        for (auto i : clicks.row(u)) {
            if (item_map[i] != kNone) {
                row.push_back(item_map[i]);
            } else {
                ++out.dropped_clicks;
            }
        }
        if (row.empty()) {
            ++out.dropped_users;
            continue;
        }
        rows[part[u]].push_back(std::move(row));
        user_ids[part[u]].push_back(clicks.user_ids()[u]);
    }
    out.train = SparseClicks::from_rows(item_ids.size(), rows[0], std::move(user_ids[0]), item_ids);
    out.validation = SparseClicks::from_rows(item_ids.size(), rows[1], std::move(user_ids[1]), item_ids);
    out.test = SparseClicks::from_rows(item_ids.size(), rows[2], std::move(user_ids[2]), item_ids);
    return out;
}

std::size_t fold_in_size(std::size_t n_clicks, double fraction) {
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n_clicks) + 0.5));
}

EvalSplit make_fold_in(const SparseClicks& heldout, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw ConfigError("fold-in fraction must lie in (0, 1)");
    }
    EvalSplit split;
    for (std::size_t u = 0; u < heldout.n_users(); ++u) {
        const auto row = heldout.row(u);
        const std::size_t k = fold_in_size(row.size(), fraction);
        if (k >= row.size()) {
            ++split.dropped_users;
            continue;
        }
        // Per-user stream: a user's partition does not depend on other rows.
        Rng rng(derive_seed(seed, kStreamFoldIn, u));
        std::vector<std::uint32_t> items(row.begin(), row.end());
        rng.shuffle(std::span<std::uint32_t>(items));
        std::vector<std::uint32_t> fold(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(k));
        std::vector<std::uint32_t> held(items.begin() + static_cast<std::ptrdiff_t>(k), items.end());
        std::sort(fold.begin(), fold.end());
        std::sort(held.begin(), held.end());
        split.users.push_back(static_cast<std::uint32_t>(u));
        split.fold_in.push_back(std::move(fold));
        split.held_out.push_back(std::move(held));
    }
    return split;
}

std::vector<std::uint8_t> encode_clicks(const SparseClicks& clicks) {
    io::ByteWriter w;
    w.put_raw(std::string_view(kClicksMagic, 4));
    w.put<std::uint32_t>(kClicksVersion);
    w.put<std::uint64_t>(clicks.n_users());
    w.put<std::uint64_t>(clicks.n_items());
    w.put_array(std::span<const std::uint64_t>(clicks.row_offsets()));
    w.put_array(std::span<const std::uint32_t>(clicks.col_indices()));
    w.put_string_table(clicks.user_ids());
    w.put_string_table(clicks.item_ids());
    return std::move(w.bytes());
}

void write_clicks(const std::filesystem::path& path, const SparseClicks& clicks) {
    io::write_file_atomic(path, encode_clicks(clicks));
}

SparseClicks decode_clicks(std::span<const std::uint8_t> bytes, const std::string& source) {
    io::ByteReader r(bytes, source);
    if (r.get_raw(4) != std::string_view(kClicksMagic, 4)) r.fail("bad magic, not a click corpus");
    const auto version = r.get<std::uint32_t>();
    if (version != kClicksVersion) r.fail("unsupported corpus version " + std::to_string(version));
    const auto n_users = r.get<std::uint64_t>();
    const auto n_items = r.get<std::uint64_t>();
    if (n_users >= r.remaining() / 8) r.fail("user count exceeds file size");
    auto offsets = r.get_array<std::uint64_t>(n_users + 1);
    auto cols = r.get_array<std::uint32_t>(offsets.back());
    auto user_ids = r.get_string_table();
    auto item_ids = r.get_string_table();
    if (r.remaining() != 0) r.fail("trailing bytes");
    try {
        return SparseClicks(static_cast<std::size_t>(n_items), std::move(offsets), std::move(cols),
                            std::move(user_ids), std::move(item_ids));
    } catch (const DataError& e) {
        throw DataError(source + ": " + e.what());
    }
}

SparseClicks read_clicks(const std::filesystem::path& path) {
    return decode_clicks(io::read_file(path), path.string());
}

}  // namespace vaecf
