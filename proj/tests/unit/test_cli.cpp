#include <doctest.h>

#include <sstream>

#include "chd/cli.hpp"
#include "chd/pair_generation.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int status;
    std::string out;
    std::string err;
};

RunResult run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int status = chd::cli::run(args, out, err);
    return {status, out.str(), err.str()};
}

bool contains(const std::string& haystack, const std::string& needle) {
    return haystack.find(needle) != std::string::npos;
}

const std::string kSample = std::string(CHD_TEST_DATA_DIR) + "/framingham_sample.csv";

}  // namespace

TEST_CASE("prepare on the Framingham-format sample") {
    chd::test::TempDir dir;
    const auto r = run({"--data", kSample, "--out", dir.path().string(), "prepare"});
    REQUIRE(r.status == 0);
    CHECK(contains(r.out, "effective config:"));
    CHECK(contains(r.out, "seed=42"));
    CHECK(contains(r.out, "rows: 40"));
    CHECK(contains(r.out, "glucose (continuous): 3"));
    CHECK(contains(r.out, "education (discrete): 2"));
    CHECK(contains(r.out, "missing total: 6"));
    CHECK(contains(r.out, "class 1: 8"));
    CHECK(contains(r.out, "test rows: 8"));
    for (const char* f : {"prepared.csv", "norm_stats.csv", "split.csv", "data_report.txt"}) {
        CHECK(fs::exists(dir.path() / f));
    }
}

TEST_CASE("prepare argument errors") {
    chd::test::TempDir dir;
    CHECK(run({"--out", dir.path().string(), "prepare"}).status == 1);
    CHECK(run({"--data", kSample, "--synthetic", "50,3,0.2", "--out", dir.path().string(), "prepare"}).status == 1);
    CHECK(run({"--synthetic", "50,3", "--out", dir.path().string(), "prepare"}).status == 1);
    const auto missing = run({"--data", (dir.path() / "nope.csv").string(), "--out", dir.path().string(), "prepare"});
    CHECK(missing.status == 1);
    CHECK(contains(missing.err, "error:"));
    CHECK(run({"--bogus", "prepare"}).status == 2);
    CHECK(run({}).status == 2);
}

TEST_CASE("pair counts can be overridden") {
    chd::test::TempDir dir;
    const std::string out = dir.path().string();
    REQUIRE(run({"--synthetic", "200,4,0.25", "--out", out, "prepare"}).status == 0);
    const auto r = run({"--out", out, "--pairs-diff", "10", "--pairs-same0", "5", "--pairs-same1", "5", "pairs"});
    REQUIRE(r.status == 0);
    CHECK(contains(r.out, "pairs: 20"));
    CHECK(contains(r.out, "train pairs: 16"));
    CHECK(contains(r.out, "test pairs: 4"));
}

TEST_CASE("commands that need earlier artifacts fail cleanly") {
    chd::test::TempDir dir;
    const std::string out = dir.path().string();
    CHECK(run({"--out", out, "pairs"}).status == 1);
    CHECK(run({"--out", out, "train", "base"}).status == 1);
    CHECK(run({"--out", out, "export"}).status == 1);
    REQUIRE(run({"--synthetic", "200,4,0.25", "--out", out, "prepare"}).status == 0);
    const auto r = run({"--out", out, "eval", "base"});
    CHECK(r.status == 1);
    CHECK(contains(r.err, "train base"));
    CHECK(run({"--out", out, "train", "forest"}).status == 2);
}

TEST_CASE("training defaults show up in the effective config") {
    chd::test::TempDir dir;
    const std::string out = dir.path().string();
    REQUIRE(run({"--synthetic", "120,4,0.25", "--out", out, "prepare"}).status == 0);
    const auto base = run({"--out", out, "--epochs", "1", "train", "base"});
    REQUIRE(base.status == 0);
    CHECK(contains(base.out, "batch-size=16"));
    CHECK(contains(base.out, "optimizer=adam"));
    CHECK(contains(base.out, "class-weights=1,5"));
    CHECK(contains(base.out, "val-fraction=0.25"));
    CHECK(contains(base.out, "epoch 1/1"));

    REQUIRE(run({"--out", out, "--pairs-diff", "40", "--pairs-same0", "20", "--pairs-same1", "20", "pairs"}).status ==
            0);
    const auto siamese = run({"--out", out, "--epochs", "1", "train", "siamese"});
    REQUIRE(siamese.status == 0);
    CHECK(contains(siamese.out, "batch-size=64"));
    CHECK(contains(siamese.out, "optimizer=rmsprop"));
    CHECK(contains(siamese.out, "margin=1"));
    CHECK(contains(siamese.out, "threshold=0.5"));
    CHECK(contains(siamese.out, "k-refs=10"));
}

TEST_CASE("invalid hyperparameters are rejected") {
    chd::test::TempDir dir;
    const std::string out = dir.path().string();
    REQUIRE(run({"--synthetic", "120,4,0.25", "--out", out, "prepare"}).status == 0);
    const auto r = run({"--out", out, "--epochs", "0", "train", "base"});
    CHECK(r.status != 0);
    CHECK(contains(r.err, "epochs"));
    CHECK(run({"--out", out, "--lr", "-1", "train", "base"}).status != 0);
    CHECK(run({"--out", out, "--epochs", "abc", "train", "base"}).status == 2);
}

TEST_CASE("full pipeline reports and is reproducible") {
    chd::test::TempDir dir;
    const std::string out = dir.path().string();
    const std::vector<std::string> pair_flags{"--pairs-diff", "200", "--pairs-same0", "100", "--pairs-same1", "100"};
    auto pipeline = [&]() {
        REQUIRE(run({"--synthetic", "300,5,0.2", "--out", out, "prepare"}).status == 0);
        auto pairs_args = pair_flags;
        pairs_args.insert(pairs_args.end(), {"--out", out, "pairs"});
        REQUIRE(run(pairs_args).status == 0);
        REQUIRE(run({"--out", out, "--epochs", "2", "train", "base"}).status == 0);
        REQUIRE(run({"--out", out, "--epochs", "2", "train", "siamese"}).status == 0);
        REQUIRE(run({"--out", out, "eval", "base"}).status == 0);
        REQUIRE(run({"--out", out, "eval", "siamese"}).status == 0);
        REQUIRE(run({"--out", out, "export"}).status == 0);
        std::vector<std::string> files;
        for (const char* f : {"prepared.csv", "split.csv", "pairs_train.csv", "history_base.csv",
                              "history_siamese.csv", "base_model.txt", "siamese_model.txt", "report_base.kv",
                              "report_siamese.kv", "report_siamese.txt", "curve_base_loss.csv",
                              "curve_siamese_accuracy.csv"}) {
            files.push_back(chd::test::read_file(dir.path() / f));
        }
        return files;
    };
    const auto first = pipeline();
    const auto second = pipeline();
    CHECK(first == second);

    const std::string base_kv = chd::test::read_file(dir.path() / "report_base.kv");
    CHECK(contains(base_kv, "seed=42\n"));
    for (const char* key : {"train.tn=", "test.tp=", "test.accuracy=", "test.precision1=", "test.recall0="}) {
        CHECK(contains(base_kv, key));
    }
    const std::string siamese_kv = chd::test::read_file(dir.path() / "report_siamese.kv");
    for (const char* key : {"pair_threshold=0.5", "pair_train.total=320", "pair_test.total=80", "sample_test.total=60"}) {
        CHECK(contains(siamese_kv, key));
    }
    const std::string curve = chd::test::read_file(dir.path() / "curve_base_loss.csv");
    CHECK(curve.rfind("epoch,train,validation\n1,", 0) == 0);

    const auto min_eval = run({"--out", out, "--aggregator", "min", "eval", "siamese"});
    CHECK(min_eval.status == 0);
    CHECK(run({"--out", out, "--aggregator", "median", "eval", "siamese"}).status == 1);
}

TEST_CASE("config file values apply and command-line flags win") {
    chd::test::TempDir dir;
    const std::string out = dir.path().string();
    chd::test::write_file(dir.path() / "run.ini", "synthetic=100,3,0.3\nseed=7\nout=" + out + "\n");
    const auto r = run({"--config", (dir.path() / "run.ini").string(), "prepare"});
    REQUIRE(r.status == 0);
    CHECK(contains(r.out, "seed=7"));
    CHECK(contains(r.out, "rows: 100"));

    const auto flag = run({"--config", (dir.path() / "run.ini").string(), "--seed", "9", "prepare"});
    REQUIRE(flag.status == 0);
    CHECK(contains(flag.out, "seed=9"));
}
