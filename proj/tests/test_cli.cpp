#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "reach/io.hpp"
#include "reach/mpc.hpp"

using namespace reach;
namespace fs = std::filesystem;

// Exercises the installed binary end to end: golden output, exit-code
// classes, and manifest-based re-execution.

namespace {

struct CliResult {
  int code = -1;
};

CliResult run_cli(const std::string& args) {
  std::string cmd = std::string(REACH_CLI_PATH) + " " + args + " >/dev/null 2>/dev/null";
  int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string data_path(const std::string& name) {
  return (fs::path(REACH_DATA_DIR) / name).string();
}

std::string tmp_dir(const std::string& name) {
  fs::path p = fs::path("cli_out") / name;
  fs::remove_all(p);
  return p.string();
}

}  // namespace

TEST_CASE("bundled affine example reproduces the checked-in golden CSV byte-for-byte") {
  std::string out = tmp_dir("golden");
  auto r = run_cli("reach-dt --net " + data_path("affine_decay_net.json") +
                   " --x0-center 0.5,0.5 --eps 0.125 --steps 8 --out " + out);
  REQUIRE(r.code == 0);
  CHECK(read_text_file(out + "/tube.csv") == read_text_file(data_path("affine_decay_golden.csv")));
}

TEST_CASE("dimension mismatch exits with the dimension code and writes nothing") {
  std::string out = tmp_dir("dim");
  SUBCASE("system dims") {
    auto r = run_cli("reach-ct --system rotation --x0-center 1,0,0 --out " + out);
    CHECK(r.code == 3);
  }
  SUBCASE("net dims") {
    auto r = run_cli("reach-dt --net " + data_path("affine_decay_net.json") +
                     " --x0-center 0.5,0.5,0.5 --out " + out);
    CHECK(r.code == 3);
  }
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("config errors exit with the config code") {
  std::string out = tmp_dir("cfg");
  CHECK(run_cli("reach-dt --net no_such_file.json --x0-center 0,0 --out " + out).code == 2);
  CHECK(run_cli("reach-ct --system no-such-system --x0-center 0 --out " + out).code == 2);
  CHECK(run_cli("reach-ct --x0-center 1,0 --out " + out).code == 2);  // missing --system
  CHECK(run_cli("split --system rotation --x0-center 1,0 --out " + out).code == 2);  // no --split
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("divergence exits with the divergence code but still writes the flagged tube") {
  // stiff decay far outside the stable step range blows up the enclosure
  std::string out = tmp_dir("div");
  auto r = run_cli("reach-ct --system decay --x0-center 1 --eps 0.01 --h 5.0 --steps 60 --out " +
                   out);
  CHECK(r.code == 5);
  Tube t = tube_from_json(read_json_file(out + "/tube.json"));
  CHECK(t.diverged);
}

TEST_CASE("same seed twice gives identical manifests and outputs") {
  std::string a = tmp_dir("det_a"), b = tmp_dir("det_b");
  std::string args =
      "train-dt --iters 3 --batch 2 --horizon 2 --seed 99 --hidden 4 --out ";
  REQUIRE(run_cli(args + a).code == 0);
  REQUIRE(run_cli(args + b).code == 0);
  for (const std::string f : {"net.json", "train_log.csv", "manifest.json"})
    CHECK(read_text_file(a + "/" + f) == read_text_file(b + "/" + f));
}

TEST_CASE("rerun from the manifest alone is byte-identical") {
  SUBCASE("continuous-time flowpipe with split") {
    std::string a = tmp_dir("rr_a"), b = tmp_dir("rr_b");
    REQUIRE(run_cli("reach-ct --system rotation --x0-center 1,0 --eps 0.05 --h 0.05 --steps 12 "
                    "--split 2x2 --seed 5 --out " +
                    a)
                .code == 0);
    REQUIRE(run_cli("rerun --manifest " + a + "/manifest.json --out " + b).code == 0);
    for (const std::string f : {"tube.csv", "tube.json", "manifest.json"})
      CHECK(read_text_file(a + "/" + f) == read_text_file(b + "/" + f));
  }
  SUBCASE("discrete-time run: manifest embeds the net, file not needed again") {
    std::string a = tmp_dir("rr_c"), b = tmp_dir("rr_d");
    REQUIRE(run_cli("reach-dt --net " + data_path("affine_decay_net.json") +
                    " --x0-center 0.5,0.5 --eps 0.125 --steps 8 --out " + a)
                .code == 0);
    REQUIRE(run_cli("rerun --manifest " + a + "/manifest.json --out " + b).code == 0);
    for (const std::string f : {"tube.csv", "tube.json", "manifest.json"})
      CHECK(read_text_file(a + "/" + f) == read_text_file(b + "/" + f));
  }
}

TEST_CASE("splitting through the CLI tightens the hull") {
  std::string plain = tmp_dir("sp_plain"), split = tmp_dir("sp_split");
  std::string base = "reach-ct --system rotation --x0-center 1,0 --eps 0.1 --h 0.05 --steps 20 ";
  REQUIRE(run_cli(base + "--out " + plain).code == 0);
  REQUIRE(run_cli(base + "--split 3x3 --out " + split).code == 0);
  Tube tp = tube_from_json(read_json_file(plain + "/tube.json"));
  Tube ts = tube_from_json(read_json_file(split + "/tube.json"));
  REQUIRE(tp.steps() == ts.steps());
  CHECK(tube_volume(ts) <= tube_volume(tp));
  // containment at the final step: the split hull is inside the plain box
  const Box& bp = tp.boxes.back();
  const Box& bs = ts.boxes.back();
  for (int d = 0; d < bp.size(); ++d) {
    CHECK(bs[d].lo >= bp[d].lo - 1e-12);
    CHECK(bs[d].hi <= bp[d].hi + 1e-12);
  }
}

TEST_CASE("interval baseline through the CLI is wider than the certified tube") {
  std::string tm = tmp_dir("bl_tm"), bl = tmp_dir("bl_iv");
  std::string base = "reach-ct --system rotation --x0-center 1,0 --eps 0.1 --h 0.05 --steps 30 ";
  REQUIRE(run_cli(base + "--out " + tm).code == 0);
  REQUIRE(run_cli(base + "--baseline interval --out " + bl).code == 0);
  Tube a = tube_from_json(read_json_file(tm + "/tube.json"));
  Tube b = tube_from_json(read_json_file(bl + "/tube.json"));
  CHECK(tube_volume(a) < tube_volume(b));
}

TEST_CASE("mpc subcommand runs a scenario to success and logs every step") {
  // scenario written through the library serializer, consumed by the CLI
  int n = 2;
  Mat<double> am(n, 2 * n);
  for (int i = 0; i < n; ++i) {
    am(i, i) = 1.0;
    am(i, n + i) = 1.0;
  }
  PlanProblem prob;
  prob.sys.step = affine_net(am, Vec<double>(2, 0.0));
  prob.sys.n = 2;
  prob.sys.m = 2;
  prob.x_goal = {0.8, 0.5};
  prob.q_weights = {1.0, 1.0};
  prob.r_weights = {0.01, 0.01};
  prob.horizon = 5;
  prob.u_lo = {-0.3, -0.3};
  prob.u_hi = {0.3, 0.3};
  prob.eps = 0.02;
  Constraint c;
  c.type = Constraint::Type::box_stay_in;
  c.lo = {-2.0, -2.0};
  c.hi = {2.0, 2.0};
  prob.constraints = {c};
  SamplerConfig sc;
  sc.seed = 11;
  sc.population = 64;
  sc.iterations = 3;
  MPCConfig mc;
  mc.total_steps = 20;
  mc.goal_radius = 0.1;
  mc.seed = 11;
  fs::create_directories("cli_out");
  write_json_file("cli_out/scenario.json", scenario_to_json(prob, sc, mc));

  std::string out = tmp_dir("mpc");
  REQUIRE(run_cli("mpc --scenario cli_out/scenario.json --x0-center 0,0 --out " + out).code == 0);
  json res = read_json_file(out + "/result.json");
  CHECK(res.at("success") == true);
  CHECK(res.at("violated") == false);
  std::string log = read_text_file(out + "/run_log.csv");
  int lines = static_cast<int>(std::count(log.begin(), log.end(), '\n'));
  CHECK(lines == int(res.at("steps_used")) + 1);

  // manifest rerun reproduces the whole run without the scenario file
  std::string out2 = tmp_dir("mpc2");
  REQUIRE(run_cli("rerun --manifest " + out + "/manifest.json --out " + out2).code == 0);
  CHECK(read_text_file(out + "/run_log.csv") == read_text_file(out2 + "/run_log.csv"));
  CHECK(read_text_file(out + "/result.json") == read_text_file(out2 + "/result.json"));
}
