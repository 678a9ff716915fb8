#include <doctest.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "helpers.hpp"
#include "sicnn/config.hpp"
#include "sicnn/log.hpp"
#include "sicnn/training.hpp"

using namespace sicnn;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"(# tiny end-to-end run
model.hall.growth_rate = 3
model.hall.mapping_channels = 4
model.rec.widths = 4,4,8,8
model.rec.feature_dim = 8
train.batch_n = 3
train.rec_batch = 6
train.pretrain_rec_batch = 6
train.rec_lr = 0.01
train.rec_drops = 6
train.rec_iters = 8
train.hall_drops =
train.hall_iters = 6
train.di_drops = 4
train.di_iters = 6
train.di_rec_drops = 4
train.di_rec_iters = 6
train.log_every = 3
train.val_samples = 4
data.identities = 6
data.samples = 4
eval.save_images = 2
)";

int cli(std::initializer_list<std::string> args) { return run_cli(std::vector<std::string>(args)); }

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("config parsing and errors") {
    const RunConfig c = parse_run_config("model.preset = desk\ntrain.alpha = 2  # weight\n\ntrain.rec_drops = 10, 20\n");
    CHECK(c.train.alpha == 2.0);
    CHECK(c.train.rec_schedule.drops == std::vector<std::uint64_t>{10, 20});
    CHECK(c.get("train.alpha") == "2");

    CHECK_THROWS_WITH_AS(parse_run_config("train.alpha = 1\ntrain.nope = 3\n", "cfg.txt"),
                         doctest::Contains("cfg.txt:2"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_run_config("train.alpha = abc\n"), doctest::Contains("expected a number"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_run_config("just text\n"), doctest::Contains("config:1"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("model.preset = huge\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("train.batch_n = -1\n"), ConfigError);

    RunConfig bad = RunConfig::from_preset("desk");
    bad.data.options.max_shift = 3.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("preset is applied before other keys regardless of order") {
    const RunConfig a = parse_run_config("train.alpha = 3\nmodel.preset = paper\n");
    CHECK(a.train.alpha == 3.0);
    CHECK(a.train.rec.widths[3] == 512);
    CHECK(a.train.hall.upscale_factor == 8);
    CHECK_NOTHROW(a.validate());
}

TEST_CASE("canonical text and hashes") {
    RunConfig a = RunConfig::from_preset("desk");
    RunConfig b = parse_run_config(a.canonical_text());
    CHECK(b.canonical_text() == a.canonical_text());
    CHECK(b.hash() == a.hash());
    CHECK(a.hash().size() == 16);
    b.set("train.alpha", "0");
    CHECK(b.hash() != a.hash());
    CHECK(b.model_hash() == a.model_hash());
    b.set("model.rec.feature_dim", "16");
    CHECK(b.model_hash() != a.model_hash());
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
    for (const auto& k : RunConfig::keys()) {
        CHECK_NOTHROW(a.get(k));
    }
}

TEST_CASE("cli usage errors exit with 1") {
    set_log_level(LogLevel::Error);
    CHECK(cli({}) == kExitUsage);
    CHECK(cli({"bogus"}) == kExitUsage);
    CHECK(cli({"train", "--alpha", "x"}) == kExitUsage);
    CHECK(cli({"train", "--approach", "baseline9"}) == kExitUsage);
    CHECK(cli({"generate", "--set", "nokey"}) == kExitUsage);
    CHECK(cli({"generate", "--set", "train.unknown=1"}) == kExitUsage);
    CHECK(cli({"eval"}) == kExitUsage);
    CHECK(cli({"--help"}) == kExitOk);
}

TEST_CASE("cli end to end") {
    set_log_level(LogLevel::Error);
    testing::TempDir tmp("cli");
    const fs::path cfg = tmp.path / "tiny.cfg";
    std::ofstream(cfg) << kTinyConfig;
    const std::string c = cfg.string();
    const std::string data = (tmp.path / "data").string();

    REQUIRE(cli({"generate", "--config", c, "--out", data}) == kExitOk);
    CHECK(fs::exists(tmp.path / "data" / "manifest.csv"));

    const std::string run = (tmp.path / "run").string();
    REQUIRE(cli({"train", "--config", c, "--data", data, "--out", run, "--checkpoint-every", "5"}) == kExitOk);
    CHECK(fs::exists(tmp.path / "run" / "config.txt"));
    CHECK(fs::exists(tmp.path / "run" / "checkpoint" / "manifest.txt"));
    const std::string metrics = slurp(tmp.path / "run" / "metrics.csv");
    CHECK(metrics.rfind("iter,phase,", 0) == 0);

    // Same command again gives byte-identical metrics.
    const std::string run2 = (tmp.path / "run2").string();
    REQUIRE(cli({"train", "--config", c, "--data", data, "--out", run2, "--threads", "2"}) == kExitOk);
    CHECK(slurp(tmp.path / "run2" / "metrics.csv") == metrics);

    // Stop midway, then resume.
    const std::string run3 = (tmp.path / "run3").string();
    REQUIRE(cli({"train", "--config", c, "--data", data, "--out", run3, "--stop-at", "11"}) == kExitOk);
    REQUIRE(cli({"train", "--config", c, "--data", data, "--out", run3, "--resume", run3 + "/checkpoint"}) == kExitOk);
    CHECK(slurp(tmp.path / "run3" / "metrics.csv") == metrics);
    // A different config cannot resume it.
    CHECK(cli({"train", "--config", c, "--data", data, "--out", run3, "--alpha", "0", "--resume",
               run3 + "/checkpoint"}) == kExitUsage);

    const std::string ev = (tmp.path / "eval").string();
    REQUIRE(cli({"eval", "--config", c, "--data", data, "--out", ev, "--checkpoint", run + "/checkpoint"}) == kExitOk);
    const std::string report = slurp(tmp.path / "eval" / "report.csv");
    CHECK(report.find("\nbicubic,") != std::string::npos);
    CHECK(report.find("\nmodel,") != std::string::npos);
    CHECK(fs::exists(tmp.path / "eval" / "report.txt"));
    CHECK(std::distance(fs::directory_iterator(tmp.path / "eval" / "samples"), fs::directory_iterator{}) == 6);

    const std::string dg = (tmp.path / "diag").string();
    REQUIRE(cli({"diagnose", "--config", c, "--data", data, "--out", dg, "--checkpoint", run + "/checkpoint"}) ==
            kExitOk);
    CHECK(slurp(tmp.path / "diag" / "projection.csv").rfind("domain,identity,pc1,pc2\n", 0) == 0);
    const std::string dg2 = (tmp.path / "diag2").string();
    REQUIRE(cli({"diagnose", "--config", c, "--data", data, "--out", dg2, "--hr-vs-hr", "--checkpoint",
                 run + "/checkpoint"}) == kExitOk);
    CHECK(slurp(tmp.path / "diag2" / "divergence.txt").find("separability 0.5\n") != std::string::npos);

    // A checkpoint from another architecture is refused.
    CHECK(cli({"eval", "--config", c, "--set", "model.rec.feature_dim=16", "--data", data, "--out", ev,
               "--checkpoint", run + "/checkpoint"}) == kExitUsage);
    // Dataset and preset sizes must agree.
    CHECK(cli({"train", "--data", data, "--set", "model.preset=paper", "--out", run2}) == kExitUsage);
    CHECK(cli({"train", "--config", c, "--data", (tmp.path / "none").string(), "--out", run2}) == kExitRuntime);
}

TEST_CASE("cli init continues under another approach") {
    set_log_level(LogLevel::Error);
    testing::TempDir tmp("cli_init");
    const fs::path cfg = tmp.path / "tiny.cfg";
    std::ofstream(cfg) << kTinyConfig;
    const std::string c = cfg.string();
    const std::string data = (tmp.path / "data").string();
    REQUIRE(cli({"generate", "--config", c, "--out", data}) == kExitOk);
    const std::string pre = (tmp.path / "pre").string();
    REQUIRE(cli({"train", "--config", c, "--data", data, "--out", pre, "--stop-at", "16"}) == kExitOk);
    const std::string b2 = (tmp.path / "b2").string();
    CHECK(cli({"train", "--config", c, "--data", data, "--out", b2, "--approach", "baseline2", "--init",
               pre + "/checkpoint"}) == kExitOk);
    CHECK(cli({"train", "--config", c, "--data", data, "--out", b2, "--approach", "baseline3", "--init",
               pre + "/checkpoint"}) == kExitUsage);
}

TEST_CASE("cli gradcheck") {
    set_log_level(LogLevel::Error);
    CHECK(cli({"gradcheck", "--seeds", "1"}) == kExitOk);
    CHECK(cli({"gradcheck", "--seeds", "1", "--inject-fault"}) == kExitRuntime);
}
