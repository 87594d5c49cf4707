// Drives the installed binary end to end through temp files, pinning the
// exit-code contract and byte-level determinism of its outputs.

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <echoroom/io.hpp>

#include "helpers.hpp"

using namespace echoroom;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kCli = ECHOROOM_CLI_PATH;

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("echoroom_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Shoebox scene with the source on the drone, plus a tilted pose.
void write_inputs(const fs::path& dir) {
  const Scene scene(test::box_room(5, 4, 3), DroneSource{});
  io::write_json_file((dir / "scene.json").string(), io::scene_to_json(scene));
  const Pose pose(
      Eigen::Quaterniond(0.9238795325112867, 0.0, 0.0, 0.3826834323650898),
      Point3(2.2, 1.9, 1.4));
  io::write_json_file((dir / "drone.json").string(),
                      io::drone_to_json(test::standard_body(), pose));
}

}  // namespace

TEST_CASE("simulate then reconstruct recovers the shoebox", "[cli]") {
  const fs::path dir = scratch("roundtrip");
  write_inputs(dir);
  const std::string scene = (dir / "scene.json").string();
  const std::string drone = (dir / "drone.json").string();
  const std::string echoes = (dir / "echoes.json").string();

  REQUIRE(run("simulate " + scene + " " + drone + " --out " + echoes +
              " --quiet") == 0);
  REQUIRE(run("reconstruct " + echoes + " " + drone + " --out " +
              (dir / "cm.json").string() + " --quiet") == 0);
  REQUIRE(run("reconstruct " + echoes + " " + drone + " --method rank --out " +
              (dir / "rank.json").string() + " --quiet") == 0);

  const io::ResultFile cm =
      io::result_from_json(io::read_json_file((dir / "cm.json").string()));
  const io::ResultFile rank =
      io::result_from_json(io::read_json_file((dir / "rank.json").string()));

  REQUIRE(cm.walls.size() == 6);
  const Scene truth(test::box_room(5, 4, 3));
  for (const Wall& w : truth.walls) {
    bool found = false;
    for (const DetectedWall& det : cm.walls)
      if (same_plane(det.plane, w.plane, 1e-8, 1e-8)) found = true;
    CHECK(found);
  }

  // the two acceptance tests agree wall for wall
  REQUIRE(rank.walls.size() == cm.walls.size());
  for (std::size_t w = 0; w < cm.walls.size(); ++w) {
    CHECK(cm.walls[w].tuple == rank.walls[w].tuple);
    CHECK(same_plane(cm.walls[w].plane, rank.walls[w].plane, 1e-9, 1e-9));
  }

  // the auto-localized source matches the loudspeaker carried by the pose
  const io::LoadedDrone ld =
      io::drone_from_json(io::read_json_file(drone));
  const Point3 L = pose_apply(ld.pose, *ld.body.loudspeaker);
  CHECK((cm.source - L).norm() <= 1e-9);
}

TEST_CASE("exit codes separate schema, geometry, and source failures",
          "[cli]") {
  const fs::path dir = scratch("exitcodes");
  write_inputs(dir);
  const std::string scene = (dir / "scene.json").string();
  const std::string drone = (dir / "drone.json").string();
  const std::string echoes = (dir / "echoes.json").string();
  REQUIRE(run("simulate " + scene + " " + drone + " --out " + echoes +
              " --quiet") == 0);

  io::write_text_file((dir / "broken.json").string(), "{\"walls\": [");
  CHECK(run("simulate " + (dir / "broken.json").string() + " " + drone +
            " --quiet") == 2);

  json degenerate = io::read_json_file(scene);
  degenerate["walls"][0]["vertices"] =
      json::array({json::array({0.0, 0.0, 0.0}), json::array({1.0, 0.0, 0.0})});
  io::write_json_file((dir / "degenerate.json").string(), degenerate);
  CHECK(run("simulate " + (dir / "degenerate.json").string() + " " + drone +
            " --quiet") == 2);

  json coplanar = io::read_json_file(drone);
  coplanar["mics"] = json::array(
      {json::array({0.0, 0.0, 0.0}), json::array({1.0, 0.0, 0.0}),
       json::array({0.0, 1.0, 0.0}), json::array({1.0, 1.0, 0.0})});
  coplanar.erase("pose");
  io::write_json_file((dir / "coplanar.json").string(), coplanar);
  CHECK(run("simulate " + scene + " " + (dir / "coplanar.json").string() +
            " --quiet") == 3);

  json stripped = io::read_json_file(echoes);
  stripped.erase("direct_delays");
  io::write_json_file((dir / "nodirect.json").string(), stripped);
  CHECK(run("reconstruct " + (dir / "nodirect.json").string() + " " + drone +
            " --quiet") == 4);
  CHECK(run("reconstruct " + (dir / "nodirect.json").string() + " " + drone +
            " --source fixed:2.34,1.87,1.45 --quiet --out " +
            (dir / "fixedsrc.json").string()) == 0);

  CHECK(run("reconstruct " + echoes + " " + drone +
            " --source nowhere --quiet") == 2);
  CHECK(run("reconstruct " + echoes + " " + drone +
            " --method newton --quiet") != 0);
}

TEST_CASE("noise flag and seeds are reproducible byte for byte", "[cli]") {
  const fs::path dir = scratch("determinism");
  write_inputs(dir);
  const std::string scene = (dir / "scene.json").string();
  const std::string drone = (dir / "drone.json").string();
  const auto out = [&](const char* name) { return (dir / name).string(); };

  REQUIRE(run("simulate " + scene + " " + drone + " --seed 5 --sigma-t 0 "
              "--out " + out("e0.json") + " --quiet") == 0);
  REQUIRE(run("simulate " + scene + " " + drone + " --seed 5 --out " +
              out("e1.json") + " --quiet") == 0);
  CHECK(slurp(dir / "e0.json") == slurp(dir / "e1.json"));

  REQUIRE(run("simulate " + scene + " " + drone + " --seed 5 --sigma-t 1e-6 "
              "--out " + out("n1.json") + " --quiet") == 0);
  REQUIRE(run("simulate " + scene + " " + drone + " --seed 5 --sigma-t 1e-6 "
              "--out " + out("n2.json") + " --quiet") == 0);
  REQUIRE(run("simulate " + scene + " " + drone + " --seed 6 --sigma-t 1e-6 "
              "--out " + out("n3.json") + " --quiet") == 0);
  CHECK(slurp(dir / "n1.json") == slurp(dir / "n2.json"));
  CHECK(slurp(dir / "n1.json") != slurp(dir / "n3.json"));
}

TEST_CASE("montecarlo writes a summary and a per-trial table", "[cli]") {
  const fs::path dir = scratch("montecarlo");
  write_inputs(dir);
  const std::string scene = (dir / "scene.json").string();
  const std::string drone = (dir / "drone.json").string();

  REQUIRE(run("montecarlo " + scene + " " + drone + " --trials 40 --seed 9 "
              "--out " + (dir / "m1.json").string() + " --quiet") == 0);
  REQUIRE(run("montecarlo " + scene + " " + drone + " --trials 40 --seed 9 "
              "--out " + (dir / "m2.json").string() + " --quiet") == 0);
  CHECK(slurp(dir / "m1.csv") == slurp(dir / "m2.csv"));

  const json summary = io::read_json_file((dir / "m1.json").string());
  CHECK(summary.at("trials") == 40);
  CHECK(summary.at("ghost_trial_count") == 0);
  CHECK(summary.at("complete_trials") == 40);
  CHECK(summary.at("config_digest").get<std::string>().size() == 16);

  const std::string csv = slurp(dir / "m1.csv");
  CHECK(csv.rfind("trial,ghost_count,detected,heard,max_residual\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 41);

  REQUIRE(run("montecarlo " + scene + " " + drone + " --trials 0 --out " +
              (dir / "empty.json").string() + " --quiet") == 0);
  const json empty = io::read_json_file((dir / "empty.json").string());
  CHECK(empty.at("trials") == 0);
  const std::string empty_csv = slurp(dir / "empty.csv");
  CHECK(std::count(empty_csv.begin(), empty_csv.end(), '\n') == 1);
}

TEST_CASE("ghost demo flags the false wall and survives a replay", "[cli]") {
  const fs::path dir = scratch("ghost");
  const std::string out = (dir / "ghost.json").string();

  REQUIRE(run("ghost-demo --out " + out + " --quiet") == 0);
  const io::ResultFile rf = io::result_from_json(io::read_json_file(out));
  REQUIRE(rf.ghost_plane.has_value());
  REQUIRE(rf.ghost.size() == rf.walls.size());
  int flagged = 0;
  for (std::size_t w = 0; w < rf.walls.size(); ++w)
    if (rf.ghost[w]) {
      ++flagged;
      CHECK(same_plane(rf.walls[w].plane, *rf.ghost_plane, 1e-8, 1e-8));
    }
  CHECK(flagged == 1);

  // the emitted scene and drone replay to the same ghost
  const std::string scene = (dir / "ghost_scene.json").string();
  const std::string drone = (dir / "ghost_drone.json").string();
  const std::string echoes = (dir / "replay_echoes.json").string();
  REQUIRE(fs::exists(scene));
  REQUIRE(fs::exists(drone));
  REQUIRE(run("simulate " + scene + " " + drone + " --out " + echoes +
              " --quiet") == 0);
  REQUIRE(run("reconstruct " + echoes + " " + drone + " --out " +
              (dir / "replay.json").string() + " --quiet") == 0);
  const io::ResultFile replay = io::result_from_json(
      io::read_json_file((dir / "replay.json").string()));
  bool reproduced = false;
  for (const DetectedWall& det : replay.walls)
    if (same_plane(det.plane, *rf.ghost_plane, 1e-8, 1e-8)) reproduced = true;
  CHECK(reproduced);

  // a 10 cm shift on one wall breaks the coincidence
  REQUIRE(run("ghost-demo --perturb 0.1 --out " +
              (dir / "perturbed.json").string() + " --quiet") == 0);
  const io::ResultFile pr = io::result_from_json(
      io::read_json_file((dir / "perturbed.json").string()));
  for (std::size_t w = 0; w < pr.walls.size(); ++w) CHECK_FALSE(pr.ghost[w]);
}
