#include <algorithm>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "vaecf/corpus.hpp"
#include "vaecf/error.hpp"
#include "vaecf/rng.hpp"

using namespace vaecf;

namespace {

RawInteractions records(std::initializer_list<std::tuple<const char*, const char*, double>> rows) {
    RawInteractions raw;
    for (auto [u, i, r] : rows) raw.records.push_back({u, i, r, std::nullopt});
    return raw;
}

RawInteractions unrated(std::initializer_list<std::pair<const char*, const char*>> rows) {
    RawInteractions raw;
    for (auto [u, i] : rows) raw.records.push_back({u, i, std::nullopt, std::nullopt});
    return raw;
}

std::set<std::string> ids_of(const SparseClicks& c) { return {c.user_ids().begin(), c.user_ids().end()}; }

SparseClicks random_clicks(Rng& rng, std::size_t n_users, std::size_t n_items) {
    std::vector<std::vector<std::uint32_t>> rows(n_users);
    for (auto& row : rows) {
        for (std::uint32_t i = 0; i < n_items; ++i) {
            if (rng.uniform() < 0.3) row.push_back(i);
        }
        if (row.empty()) row.push_back(static_cast<std::uint32_t>(rng.below(n_items)));
    }
    std::vector<std::string> users(n_users), items(n_items);
    for (std::size_t u = 0; u < n_users; ++u) users[u] = "user-" + std::to_string(u);
    for (std::size_t i = 0; i < n_items; ++i) items[i] = "item \xC3\xA9" + std::to_string(i);
    return SparseClicks::from_rows(n_items, rows, users, items);
}

}  // namespace

TEST_CASE("ingest maps CSV fields by role") {
    const auto fmt = FormatConfig::from_roles("user,item,rating,ts");
    const auto raw = ingest_text("u1,i1,5,100\n", fmt);
    REQUIRE(raw.records.size() == 1);
    CHECK(raw.records[0].user_id == "u1");
    CHECK(raw.records[0].item_id == "i1");
    CHECK(*raw.records[0].rating == 5.0);
    CHECK(*raw.records[0].timestamp == 100);
}

TEST_CASE("ingest of an empty file yields no records") {
    CHECK(ingest_text("", FormatConfig::from_roles("user,item")).records.empty());
}

TEST_CASE("ingest reports the offending line") {
    const auto fmt = FormatConfig::from_roles("user,item,rating");
    try {
        ingest_text("u0,i0,4\nu1,i1,abc\n", fmt);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(ingest_text("u1,i1\n", fmt), ParseError);
    CHECK_THROWS_AS(ingest_text(",i1,3\n", fmt), ParseError);
    CHECK_THROWS_AS(ingest_text("u1,i1,nan\n", fmt), ParseError);
}

TEST_CASE("ingest skips a declared header and blank lines") {
    const auto fmt = FormatConfig::from_roles("item,user", '\t', true);
    const auto raw = ingest_text("movie\tperson\n\nm1\tp1\r\nm2\tp1\n", fmt);
    REQUIRE(raw.records.size() == 2);
    CHECK(raw.records[1].user_id == "p1");
    CHECK(raw.records[1].item_id == "m2");
    CHECK_FALSE(raw.records[0].rating.has_value());
}

TEST_CASE("column roles must name user and item") {
    CHECK_THROWS_AS(FormatConfig::from_roles("item,rating"), ConfigError);
    CHECK_THROWS_AS(FormatConfig::from_roles("user,rating"), ConfigError);
    CHECK_THROWS_AS(ingest("/nonexistent/ratings.csv", FormatConfig{}), DataError);
}

TEST_CASE("binarize keeps ratings at or above the threshold") {
    const auto clicks = binarize_and_filter(records({{"u", "i", 5}, {"u", "j", 3}}), {4.0, 0, 0});
    CHECK(clicks.n_users() == 1);
    CHECK(clicks.n_items() == 1);
    CHECK(clicks.item_ids()[0] == "i");
}

TEST_CASE("binarize rejects an empty result") {
    CHECK_THROWS_AS(binarize_and_filter(records({{"u", "i", 1}, {"v", "j", 2}}), {4.0, 0, 0}), EmptyCorpusError);
    // Three users with two items each can never reach five.
    CHECK_THROWS_AS(binarize_and_filter(unrated({{"a", "x"}, {"a", "y"}, {"b", "x"}, {"b", "y"}, {"c", "x"}, {"c", "z"}}),
                                        {0.0, 5, 0}),
                    EmptyCorpusError);
}

TEST_CASE("binarize collapses duplicates and keeps unrated records") {
    const auto clicks = binarize_and_filter(unrated({{"a", "x"}, {"a", "x"}, {"a", "y"}}), {4.0, 0, 0});
    CHECK(clicks.nnz() == 2);
}

TEST_CASE("filtering iterates to a fixed point") {
    // Hand simulation with min 2 items per user and 2 users per item:
    //   round 1: every user has 2 clicks; items y and w have 1 user and go.
    //   round 2: A = {x} and C = {z} now fall short and go; x and z keep 2 users.
    //   round 3: nothing changes. A single pass would have kept A and C.
    const auto raw = unrated({{"A", "x"}, {"A", "y"}, {"B", "x"}, {"B", "z"}, {"C", "z"}, {"C", "w"}, {"D", "x"}, {"D", "z"}});
    const auto clicks = binarize_and_filter(raw, {0.0, 2, 2});
    CHECK(clicks.user_ids() == std::vector<std::string>{"B", "D"});
    CHECK(clicks.item_ids() == std::vector<std::string>{"x", "z"});
    CHECK(clicks.nnz() == 4);
}

TEST_CASE("filtered corpora satisfy both thresholds on recount") {
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        RawInteractions raw;
        const auto n = 50 + rng.below(400);
        for (std::uint64_t k = 0; k < n; ++k) {
            raw.records.push_back({"u" + std::to_string(rng.below(40)), "i" + std::to_string(rng.below(30)),
                                   static_cast<double>(1 + rng.below(5)), std::nullopt});
        }
        const FilterConfig f{3.0, 1 + rng.below(5), 1 + rng.below(4)};
        SparseClicks clicks;
        try {
            clicks = binarize_and_filter(raw, f);
        } catch (const EmptyCorpusError&) {
            continue;
        }
        for (std::size_t u = 0; u < clicks.n_users(); ++u) CHECK(clicks.row_length(u) >= f.min_user_items);
        for (auto c : clicks.item_counts()) CHECK(c >= f.min_item_users);
    }
}

TEST_CASE("SparseClicks validates its structure") {
    CHECK_THROWS_AS(SparseClicks(2, {0, 2}, {1, 1}, {"u"}, {"a", "b"}), DataError);
    CHECK_THROWS_AS(SparseClicks(2, {0, 1}, {2}, {"u"}, {"a", "b"}), DataError);
    CHECK_THROWS_AS(SparseClicks(2, {0, 1}, {0, 1}, {"u"}, {"a", "b"}), DataError);
    CHECK_NOTHROW(SparseClicks(2, {0, 2}, {0, 1}, {"u"}, {"a", "b"}));
}

TEST_CASE("interchange format round-trips") {
    Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        const auto clicks = random_clicks(rng, 1 + rng.below(30), 1 + rng.below(20));
        const auto bytes = encode_clicks(clicks);
        CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "MRCX");
        CHECK(decode_clicks(bytes) == clicks);
    }
    const auto path = std::filesystem::temp_directory_path() / "vaecf_roundtrip.mrcx";
    const auto clicks = random_clicks(rng, 12, 7);
    write_clicks(path, clicks);
    CHECK(read_clicks(path) == clicks);
    std::filesystem::remove(path);
}

TEST_CASE("interchange layout is the documented little-endian layout") {
    const auto clicks = SparseClicks::from_rows(3, {{0, 2}, {1}}, {"a", "b"}, {"x", "y", "z"});
    const auto bytes = encode_clicks(clicks);
    // magic 4 + version 4 + U 8 + I 8 + offsets 3*8 + cols 3*4 + tables (8 + 2*(8+1)) + (8 + 3*(8+1))
    CHECK(bytes.size() == 4 + 4 + 8 + 8 + 24 + 12 + 26 + 35);
    CHECK(bytes[4] == 1);   // version
    CHECK(bytes[8] == 2);   // U
    CHECK(bytes[16] == 3);  // I
    auto truncated = bytes;
    truncated.pop_back();
    CHECK_THROWS_AS(decode_clicks(truncated), DataError);
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_clicks(bad), DataError);
}

TEST_CASE("split_users partitions users") {
    std::vector<std::vector<std::uint32_t>> rows;
    std::vector<std::string> users;
    for (int u = 0; u < 10; ++u) {
        rows.push_back({0, 1, 2});
        users.push_back("u" + std::to_string(u));
    }
    const auto clicks = SparseClicks::from_rows(3, rows, users, {"a", "b", "c"});
    const auto split = split_users(clicks, 2, 2, 42);
    CHECK(split.train.n_users() == 6);
    CHECK(split.validation.n_users() == 2);
    CHECK(split.test.n_users() == 2);
    std::set<std::string> all;
    for (const auto* part : {&split.train, &split.validation, &split.test}) {
        for (const auto& id : part->user_ids()) CHECK(all.insert(id).second);
    }
    CHECK(all.size() == 10);

    const auto again = split_users(clicks, 2, 2, 42);
    CHECK(again.train == split.train);
    CHECK(again.validation == split.validation);
    CHECK(again.test == split.test);

    CHECK_THROWS_AS(split_users(clicks, 5, 5, 1), ConfigError);
}

TEST_CASE("held-out rows lose items absent from training") {
    // A = {x, y}, B = {x, y}, C = {z}: z occurs only for C, so whenever C is
    // held out its row becomes empty and it is dropped, and z leaves the item
    // space. Find a seed that puts C in a held-out part.
    const auto clicks = SparseClicks::from_rows(3, {{0, 1}, {0, 1}, {2}}, {"A", "B", "C"}, {"x", "y", "z"});
    bool seen = false;
    for (std::uint64_t seed = 0; seed < 50 && !seen; ++seed) {
        const auto split = split_users(clicks, 1, 1, seed);
        if (ids_of(split.train).count("C")) continue;
        seen = true;
        CHECK(split.dropped_users == 1);
        CHECK(split.dropped_clicks == 1);
        CHECK(split.train.item_ids() == std::vector<std::string>{"x", "y"});
        CHECK(split.validation.n_users() + split.test.n_users() == 1);
        CHECK(split.train.n_users() + split.validation.n_users() + split.test.n_users() + split.dropped_users == 3);
    }
    CHECK(seen);
}

TEST_CASE("user split conserves users on random corpora") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto clicks = random_clicks(rng, 20 + rng.below(40), 5 + rng.below(15));
        const auto split = split_users(clicks, 5, 5, rng.next());
        CHECK(split.train.n_users() + split.validation.n_users() + split.test.n_users() + split.dropped_users ==
              clicks.n_users());
        CHECK(split.validation.n_items() == split.train.n_items());
        CHECK(split.test.item_ids() == split.train.item_ids());
        for (auto c : split.train.item_counts()) CHECK(c >= 1);
    }
}

TEST_CASE("fold-in sizes round half up") {
    CHECK(fold_in_size(5, 0.8) == 4);
    CHECK(fold_in_size(2, 0.5) == 1);
    CHECK(fold_in_size(5, 0.5) == 3);
    CHECK(fold_in_size(3, 0.8) == 2);
    CHECK(fold_in_size(2, 0.8) == 2);
}

TEST_CASE("make_fold_in partitions each user's clicks") {
    const auto clicks = SparseClicks::from_rows(6, {{0, 1, 2, 3, 4}, {1, 5}, {2, 3}}, {"a", "b", "c"},
                                                {"0", "1", "2", "3", "4", "5"});
    const auto split = make_fold_in(clicks, 0.8, 9);
    // b and c have two clicks: round(1.6) = 2 leaves nothing held out.
    REQUIRE(split.size() == 1);
    CHECK(split.dropped_users == 2);
    CHECK(split.fold_in[0].size() == 4);
    CHECK(split.held_out[0].size() == 1);

    const auto half = make_fold_in(clicks, 0.5, 9);
    CHECK(half.size() == 3);
    CHECK(half.fold_in[1].size() == 1);
    CHECK(half.held_out[1].size() == 1);

    const auto again = make_fold_in(clicks, 0.5, 9);
    CHECK(again.fold_in == half.fold_in);
    CHECK(again.held_out == half.held_out);

    CHECK_THROWS_AS(make_fold_in(clicks, 1.0, 0), ConfigError);
    CHECK_THROWS_AS(make_fold_in(clicks, 0.0, 0), ConfigError);
}

TEST_CASE("fold-in and held-out are disjoint and cover the row") {
    Rng rng(17);
    const auto clicks = random_clicks(rng, 60, 25);
    const auto split = make_fold_in(clicks, 0.8, 123);
    CHECK(split.size() + split.dropped_users == clicks.n_users());
    for (std::size_t k = 0; k < split.size(); ++k) {
        const auto row = clicks.row(split.users[k]);
        std::vector<std::uint32_t> merged;
        std::set_union(split.fold_in[k].begin(), split.fold_in[k].end(), split.held_out[k].begin(),
                       split.held_out[k].end(), std::back_inserter(merged));
        CHECK(merged == std::vector<std::uint32_t>(row.begin(), row.end()));
        CHECK(merged.size() == split.fold_in[k].size() + split.held_out[k].size());
        CHECK(split.fold_in[k].size() == fold_in_size(row.size(), 0.8));
        CHECK(std::is_sorted(split.fold_in[k].begin(), split.fold_in[k].end()));
    }
}
