#include <doctest.h>

#include <algorithm>
#include <set>

#include "chd/error.hpp"
#include "chd/pair_generation.hpp"
#include "chd/random.hpp"
#include "test_util.hpp"

using namespace chd;

namespace {

std::shared_ptr<const FeatureTable> table_with_labels(std::vector<int> labels) {
    auto ft = std::make_shared<FeatureTable>();
    ft->features = Matrix(labels.size(), 2);
    ft->schema = {{"a", ColumnKind::continuous, false}, {"b", ColumnKind::continuous, false}};
    for (std::size_t i = 0; i < labels.size(); ++i) ft->features(i, 0) = static_cast<double>(i);
    ft->labels = std::move(labels);
    return ft;
}

// Brute-force check of every emitted pair against the labels.
void check_pairs_against_labels(const PairSet& ps) {
    for (const auto& p : ps.pairs) {
        REQUIRE(p.left < ps.source->rows());
        REQUIRE(p.right < ps.source->rows());
        CHECK(p.similar == (ps.source->labels[p.left] == ps.source->labels[p.right]));
        if (p.similar) CHECK(p.left != p.right);
    }
}

}  // namespace

TEST_CASE("split_by_label partitions and shuffles") {
    const auto ft = table_with_labels({0, 1, 0});
    const LabelIndex idx = split_by_label(*ft, 1);
    CHECK(std::set<std::size_t>(idx.class0.begin(), idx.class0.end()) == std::set<std::size_t>{0, 2});
    CHECK(idx.class1 == std::vector<std::size_t>{1});

    const auto empty = table_with_labels({});
    const LabelIndex none = split_by_label(*empty, 1);
    CHECK(none.class0.empty());
    CHECK(none.class1.empty());

    std::vector<int> many(200, 0);
    const auto big = table_with_labels(many);
    const auto a = split_by_label(*big, 5);
    CHECK(a.class0 == split_by_label(*big, 5).class0);
    CHECK_FALSE(std::is_sorted(a.class0.begin(), a.class0.end()));
}

TEST_CASE("generate_pairs on a five-row table") {
    const auto ft = table_with_labels({0, 1, 0, 1, 0});
    const PairSet ps = generate_pairs(ft, {4, 2, 2}, 17);
    CHECK(ps.size() == 8);
    CHECK(ps.counts == PairCounts{4, 2, 2});
    check_pairs_against_labels(ps);
    CHECK(count_pairs(*ft, ps.pairs) == PairCounts{4, 2, 2});
}

TEST_CASE("generate_pairs edge cases") {
    const auto ft = table_with_labels({0, 1, 0, 0});
    CHECK(generate_pairs(ft, {0, 0, 0}, 1).empty());
    CHECK_THROWS_AS(generate_pairs(ft, {0, 0, 1}, 1), ConfigError);
    CHECK_NOTHROW(generate_pairs(ft, {5, 5, 0}, 1));

    const auto one_class = table_with_labels({0, 0, 0});
    CHECK_THROWS_AS(generate_pairs(one_class, {1, 0, 0}, 1), ConfigError);
    CHECK_THROWS_AS(generate_pairs(nullptr, {1, 0, 0}, 1), ConfigError);
}

TEST_CASE("generate_pairs property: counts and flags hold for random requests") {
    Rng rng(23);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<int> labels(4 + rng() % 60);
        for (auto& l : labels) l = rng() % 3 == 0 ? 1 : 0;
        labels[0] = 0;
        labels[1] = 0;
        labels[2] = 1;
        labels[3] = 1;
        const auto ft = table_with_labels(labels);
        const PairCounts req{rng() % 50, rng() % 50, rng() % 50};
        const PairSet ps = generate_pairs(ft, req, rng());
        CHECK(ps.size() == req.total());
        CHECK(count_pairs(*ft, ps.pairs) == req);
        check_pairs_against_labels(ps);
    }
}

TEST_CASE("generate_pairs is deterministic per seed, byte-for-byte") {
    test::TempDir dir;
    std::vector<int> labels(50);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 4 == 0;
    const auto ft = table_with_labels(labels);
    save_pairs(generate_pairs(ft, {30, 20, 10}, 99), dir.path() / "a.csv");
    save_pairs(generate_pairs(ft, {30, 20, 10}, 99), dir.path() / "b.csv");
    save_pairs(generate_pairs(ft, {30, 20, 10}, 100), dir.path() / "c.csv");
    CHECK(test::read_file(dir.path() / "a.csv") == test::read_file(dir.path() / "b.csv"));
    CHECK(test::read_file(dir.path() / "a.csv") != test::read_file(dir.path() / "c.csv"));
}

TEST_CASE("pair corpus balance equals the requested same-class share") {
    std::vector<int> labels(300);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 7 == 0;
    const auto ft = table_with_labels(labels);
    const PairSet ps = generate_pairs(ft, {1000, 500, 500}, 3);
    const auto similar = std::count_if(ps.pairs.begin(), ps.pairs.end(), [](const SamplePair& p) { return p.similar; });
    CHECK(similar == 1000);
}

TEST_CASE("split_pairs sizes and determinism") {
    std::vector<int> labels(40);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 3 == 0;
    const auto ft = table_with_labels(labels);

    const PairSet ten = generate_pairs(ft, {4, 3, 3}, 1);
    const auto split = split_pairs(ten, 0.8, 2);
    CHECK(split.train.size() == 8);
    CHECK(split.test.size() == 2);
    CHECK(split.train.counts.total() == 8);

    const auto again = split_pairs(ten, 0.8, 2);
    CHECK(again.train.pairs == split.train.pairs);
    CHECK(again.test.pairs == split.test.pairs);

    // union is the original multiset
    auto key = [](const SamplePair& p) { return std::tuple(p.left, p.right, p.similar); };
    std::multiset<std::tuple<std::size_t, std::size_t, bool>> orig, joined;
    for (const auto& p : ten.pairs) orig.insert(key(p));
    for (const auto& p : split.train.pairs) joined.insert(key(p));
    for (const auto& p : split.test.pairs) joined.insert(key(p));
    CHECK(orig == joined);

    CHECK_THROWS_AS(split_pairs(ten, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(split_pairs(ten, 1.0, 1), ConfigError);
}

TEST_CASE("pair files round-trip and are validated on load") {
    test::TempDir dir;
    std::vector<int> labels(20);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 2;
    const auto ft = table_with_labels(labels);
    const PairSet ps = generate_pairs(ft, {10, 5, 5}, 4);
    save_pairs(ps, dir.path() / "p.csv");
    const PairSet back = load_pairs(ft, dir.path() / "p.csv");
    CHECK(back.pairs == ps.pairs);
    CHECK(back.counts == ps.counts);

    test::write_file(dir.path() / "bad.csv", "left_index,right_index,similar\n0,1,1\n");
    CHECK_THROWS_AS(load_pairs(ft, dir.path() / "bad.csv"), SchemaError);
    test::write_file(dir.path() / "oob.csv", "left_index,right_index,similar\n0,99,0\n");
    CHECK_THROWS_AS(load_pairs(ft, dir.path() / "oob.csv"), SchemaError);
    CHECK_THROWS_AS(load_pairs(ft, dir.path() / "missing.csv"), IoError);
}
