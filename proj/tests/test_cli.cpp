#define DOCTEST_CONFIG_IMPLEMENT
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

std::string g_cli;  // path to the binary under test, from argv[1]

int run(const std::string& args) {
    const int status = std::system((g_cli + " " + args + " >/dev/null 2>&1").c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path fresh_dir(const char* name) {
    const auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const char* kTinyNet = R"({
  "epochs": 1, "batch_size": 16, "seed": 5, "max_train_samples": 64,
  "net": {"z_dim": 4, "c_dim": 10, "num_classes": 10, "base_channels": 4,
          "feature_width": 32, "prior": "categorical"}
})";

}  // namespace

TEST_CASE("help and usage exit codes") {
    CHECK(run("--help") == 0);
    CHECK(run("train --help") == 0);
    CHECK(run("no-such-command") == 2);
    CHECK(run("") == 2);                       // a subcommand is required
    CHECK(run("sample --out x.ppm") == 2);     // missing required --checkpoint
    CHECK(run("make-dataset --kind bogus --out /tmp/never --seed 1") == 2);
}

TEST_CASE("grad-check passes") { CHECK(run("grad-check --seed 1") == 0); }

TEST_CASE("io failures exit 3") {
    const auto dir = fresh_dir("dualinf_cli_io");
    CHECK(run("eval --checkpoint " + (dir / "none.ckpt").string() + " --dataset " +
              dir.string()) == 3);
    CHECK(run("train --dataset " + (dir / "nodataset").string() + " --out " +
              (dir / "out").string()) == 3);
    fs::remove_all(dir);
}

TEST_CASE("dataset synthesis and deterministic training") {
    const auto dir = fresh_dir("dualinf_cli_train");
    const auto data_dir = (dir / "data").string();
    CHECK(run("make-dataset --kind mnist_cb --count 80 --seed 3 --out " + data_dir) == 0);
    CHECK(fs::exists(fs::path(data_dir) / "manifest.json"));
    CHECK(fs::exists(fs::path(data_dir) / "images.f32"));

    std::ofstream(dir / "cfg.json") << kTinyNet;
    const std::string base = "train --config " + (dir / "cfg.json").string() +
                             " --dataset " + data_dir + " --out ";
    CHECK(run(base + (dir / "run1").string()) == 0);
    CHECK(run(base + (dir / "run2").string()) == 0);
    const auto m1 = slurp(dir / "run1" / "metrics.csv");
    CHECK(m1 == slurp(dir / "run2" / "metrics.csv"));
    CHECK(m1.rfind("epoch,step,lr,", 0) == 0);
    CHECK(fs::exists(dir / "run1" / "checkpoint_1.ckpt"));

    // a different seed changes the log
    CHECK(run(base + (dir / "run3").string() + " --seed 77") == 0);
    CHECK(m1 != slurp(dir / "run3" / "metrics.csv"));

    // downstream commands run against the checkpoint
    const std::string ckpt = (dir / "run1" / "checkpoint_1.ckpt").string();
    CHECK(run("sample --checkpoint " + ckpt + " --count 16 --cols 4 --seed 2 --out " +
              (dir / "grid.ppm").string()) == 0);
    CHECK(slurp(dir / "grid.ppm").rfind("P6\n", 0) == 0);
    CHECK(run("interpolate --checkpoint " + ckpt + " --dataset " + data_dir +
              " --src 0 --tgt 1 --steps 3 --out " + (dir / "interp.ppm").string()) == 0);
    CHECK(run("dump-latents --checkpoint " + ckpt + " --dataset " + data_dir +
              " --out " + (dir / "latents.csv").string()) == 0);
    CHECK(slurp(dir / "latents.csv").rfind("id,label,", 0) == 0);
    CHECK(run("interpolate --checkpoint " + ckpt + " --dataset " + data_dir +
              " --src 999 --tgt 0 --out " + (dir / "x.ppm").string()) == 2);
    fs::remove_all(dir);
}

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: test_cli <path-to-cli>\n");
        return 1;
    }
    g_cli = argv[1];
    doctest::Context ctx;
    return ctx.run();
}
