#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "testutil.hpp"

#ifndef MIPO_CLI_BIN
#error "MIPO_CLI_BIN must point at the mipo executable"
#endif

namespace {

struct RunResult {
    int exit_code;
    std::string output;  // stdout + stderr
};

RunResult run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + std::string(MIPO_CLI_BIN) + " " + args + " 2>&1";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    char buf[4096];
    while (std::size_t got = std::fread(buf, 1, sizeof(buf), pipe)) out.append(buf, got);
    const int status = ::pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

}  // namespace

TEST_CASE("help exits 0 and lists the subcommands") {
    auto r = run("--help");
    CHECK(r.exit_code == 0);
    for (const char* sub : {"gen-data", "sft", "stats", "align", "analyze-k", "sweep-beta",
                            "losscurve", "gradcheck"})
        CHECK(r.output.find(sub) != std::string::npos);
}

TEST_CASE("user errors exit 1 with a message, never a stack trace") {
    auto unknown = run("align --no-such-flag");
    CHECK(unknown.exit_code == 1);

    testutil::TempDir dir("cli_err");
    auto beta0 = run("align --ref missing.ckpt --data missing.jsonl --out " +
                     (dir.path / "o").string() + " --beta 0");
    CHECK(beta0.exit_code == 1);
    CHECK(beta0.output.find("beta must be > 0") != std::string::npos);

    auto missing = run("sft --data /nonexistent/pairs.jsonl --out " + (dir.path / "o").string());
    CHECK(missing.exit_code == 1);
    CHECK(missing.output.find("not found") != std::string::npos);

    std::ofstream os(dir.path / "bad.jsonl");
    os << R"({"id":"a","prompt":"ab","chosen":"cd","rejected":"ce"})" << "\n";
    os << R"({"id":"b","prompt":"ab","chosen":"cd"})" << "\n";
    os.close();
    auto bad = run("sft --data " + (dir.path / "bad.jsonl").string() + " --out " +
                   (dir.path / "o").string());
    CHECK(bad.exit_code == 1);
    CHECK(bad.output.find("line 2: missing field rejected") != std::string::npos);
}

TEST_CASE("gradcheck exits 0 within tolerance and 2 beyond it") {
    auto ok = run("gradcheck --seed 5 --trials 1 --samples 6");
    CHECK(ok.exit_code == 0);
    CHECK(ok.output.find("max relative gradient error") != std::string::npos);

    auto fail = run("gradcheck --seed 5 --trials 1 --samples 6 --tolerance 1e-18");
    CHECK(fail.exit_code == 2);
}

TEST_CASE("pipeline produces declared artifacts and byte-stable reruns") {
    testutil::TempDir dir("cli_pipe");
    const auto base = dir.path.string();

    CHECK(run("gen-data --out " + base + "/data --n 80 --seed 11").exit_code == 0);
    CHECK(std::filesystem::exists(dir.path / "data" / "pairs.jsonl"));
    CHECK(std::filesystem::exists(dir.path / "data" / "run_config.json"));

    CHECK(run("sft --data " + base + "/data/pairs.jsonl --out " + base +
              "/ref --steps 40 --seed 11")
              .exit_code == 0);
    CHECK(std::filesystem::exists(dir.path / "ref" / "reference.ckpt"));
    CHECK(std::filesystem::exists(dir.path / "ref" / "sft_log.csv"));

    const std::string align_cmd = "align --ref " + base + "/ref/reference.ckpt --data " + base +
                                  "/data/pairs.jsonl --method mipo --beta 10 --steps 5 --seed 11";
    const auto ref_bytes = testutil::read_file(dir.path / "ref" / "reference.ckpt");
    CHECK(run(align_cmd + " --out " + base + "/p1").exit_code == 0);
    CHECK(run(align_cmd + " --out " + base + "/p2").exit_code == 0);
    // the reference checkpoint is read-only to alignment
    CHECK(testutil::read_file(dir.path / "ref" / "reference.ckpt") == ref_bytes);
    CHECK(testutil::read_file(dir.path / "p1" / "policy.ckpt") ==
          testutil::read_file(dir.path / "p2" / "policy.ckpt"));
    CHECK(testutil::read_file(dir.path / "p1" / "train_steps.csv") ==
          testutil::read_file(dir.path / "p2" / "train_steps.csv"));
    CHECK(testutil::read_file(dir.path / "p1" / "train_eval.csv") ==
          testutil::read_file(dir.path / "p2" / "train_eval.csv"));

    CHECK(run("analyze-k --eval-log " + base + "/p1/train_eval.csv --out " + base + "/ak")
              .exit_code == 0);
    CHECK(std::filesystem::exists(dir.path / "ak" / "k_buckets.csv"));

    CHECK(run("losscurve --out " + base + "/lc --beta 1 --k -2,0,3").exit_code == 0);
    CHECK(std::filesystem::exists(dir.path / "lc" / "losscurve.csv"));

    CHECK(run("sweep-beta --ref " + base + "/ref/reference.ckpt --data " + base +
              "/data/pairs.jsonl --out " + base + "/sw --betas 5,10 --steps 3 --seed 11")
              .exit_code == 0);
    CHECK(std::filesystem::exists(dir.path / "sw" / "sweep.csv"));
    CHECK(std::filesystem::exists(dir.path / "sw" / "beta_5" / "policy.ckpt"));
    CHECK(std::filesystem::exists(dir.path / "sw" / "run_config.json"));
    CHECK(testutil::read_file(dir.path / "sw" / "sweep.csv")
              .rfind("beta,final_mean_train_loss,mean_eval_policy_margin,diverged\n", 0) == 0);

    // the optional SimPO baseline works through the same pipeline
    CHECK(run("align --ref " + base + "/ref/reference.ckpt --data " + base +
              "/data/pairs.jsonl --out " + base + "/sp --method simpo --beta 2 --gamma 0.5 "
              "--steps 3 --seed 11")
              .exit_code == 0);
    CHECK(std::filesystem::exists(dir.path / "sp" / "policy.ckpt"));
    auto gamma_misuse = run("align --ref " + base + "/ref/reference.ckpt --data " + base +
                            "/data/pairs.jsonl --out " + base + "/gm --method mipo --gamma 0.5 "
                            "--steps 3 --seed 11");
    CHECK(gamma_misuse.exit_code == 1);
    CHECK(gamma_misuse.output.find("gamma is only valid with method simpo") !=
          std::string::npos);
}

TEST_CASE("MIPO_SEED environment variable sets the default seed") {
    testutil::TempDir dir("cli_env");
    const auto base = dir.path.string();
    CHECK(run("gen-data --out " + base + "/a --n 20", "MIPO_SEED=7").exit_code == 0);
    CHECK(run("gen-data --out " + base + "/b --n 20", "MIPO_SEED=7").exit_code == 0);
    CHECK(run("gen-data --out " + base + "/c --n 20", "MIPO_SEED=8").exit_code == 0);
    const auto a = testutil::read_file(dir.path / "a" / "pairs.jsonl");
    CHECK(a == testutil::read_file(dir.path / "b" / "pairs.jsonl"));
    CHECK(a != testutil::read_file(dir.path / "c" / "pairs.jsonl"));

    auto bad = run("gen-data --out " + base + "/d --n 5", "MIPO_SEED=notanumber");
    CHECK(bad.exit_code == 1);
}
