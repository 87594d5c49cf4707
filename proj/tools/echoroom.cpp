// echoroom command line: simulate first-order echo delays, reconstruct walls
// from unlabeled delays, run the random-pose Monte Carlo census, and build the
// parallel-wall ghost demonstration.
//
// Exit codes: 0 success, 2 malformed input file or option, 3 geometric
// invariant violation, 4 unresolvable source, 5 failed demo self-check.

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>

#include "echoroom/digest.hpp"
#include "echoroom/experiments.hpp"
#include "echoroom/io.hpp"
#include "echoroom/reconstruction.hpp"
#include "echoroom/simulator.hpp"

namespace {

using namespace echoroom;

constexpr int kOk = 0;
constexpr int kSchemaExit = 2;
constexpr int kGeometryExit = 3;
constexpr int kSourceExit = 4;
constexpr int kSelfCheckExit = 5;

int log_level() {
  const char* env = std::getenv("ECHOROOM_LOG");
  if (env == nullptr) return 0;
  const std::string v(env);
  if (v == "debug") return 2;
  if (v == "info") return 1;
  return 0;
}

std::vector<double> parse_csv_numbers(const std::string& spec,
                                      const std::string& what) {
  std::vector<double> out;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t comma = spec.find(',', pos);
    const std::string tok = comma == std::string::npos
                                ? spec.substr(pos)
                                : spec.substr(pos, comma - pos);
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (tok.empty() || end != tok.c_str() + tok.size() || !std::isfinite(v))
      throw SchemaError(what + ": bad number \"" + tok + "\"");
    out.push_back(v);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

// --source auto | fixed:<x,y,z>. Empty optional means auto-localize.
std::optional<Point3> parse_source_spec(const std::string& spec) {
  if (spec == "auto") return std::nullopt;
  const std::string prefix = "fixed:";
  if (spec.rfind(prefix, 0) == 0) {
    const std::vector<double> nums =
        parse_csv_numbers(spec.substr(prefix.size()), "--source");
    if (nums.size() == 3) return Point3(nums[0], nums[1], nums[2]);
  }
  throw SchemaError("--source: expected auto or fixed:<x,y,z>");
}

Box parse_box_spec(const std::string& spec) {
  const std::vector<double> nums = parse_csv_numbers(spec, "--box");
  if (nums.size() != 6) throw SchemaError("--box: expected x0,y0,z0,x1,y1,z1");
  try {
    return Box(Point3(nums[0], nums[1], nums[2]),
               Point3(nums[3], nums[4], nums[5]));
  } catch (const Error&) {
    throw SchemaError("--box: lower corner must not exceed upper corner");
  }
}

// Middle 60% of the scene's bounding box, a sensible flight volume whenever
// the walls enclose the room.
Box default_box(const Scene& scene) {
  Point3 lo = Point3::Constant(std::numeric_limits<double>::infinity());
  Point3 hi = -lo;
  for (const Wall& w : scene.walls)
    for (const Point3& v : w.vertices) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
  const Point3 mid = 0.5 * (lo + hi);
  const Point3 half = 0.3 * (hi - lo);
  return Box(mid - half, mid + half);
}

std::string csv_sibling(const std::string& path) {
  const std::size_t slash = path.find_last_of("/\\");
  const std::size_t dot = path.find_last_of('.');
  if (dot == std::string::npos ||
      (slash != std::string::npos && dot < slash))
    return path + ".csv";
  return path.substr(0, dot) + ".csv";
}

std::string sibling(const std::string& path, const std::string& suffix) {
  const std::size_t slash = path.find_last_of("/\\");
  const std::size_t dot = path.find_last_of('.');
  if (dot == std::string::npos ||
      (slash != std::string::npos && dot < slash))
    return path + suffix;
  return path.substr(0, dot) + suffix;
}

void feed_scene(Digest& d, const io::LoadedScene& ls) {
  d.feed(ls.speed_of_sound);
  d.feed(std::uint64_t{ls.scene.walls.size()});
  for (const Wall& w : ls.scene.walls) {
    d.feed(std::uint64_t{w.vertices.size()});
    for (const Point3& v : w.vertices) d.feed(v);
  }
  if (const auto* fixed = std::get_if<FixedSource>(&ls.scene.source_mode))
    d.feed(std::uint64_t{1}).feed(fixed->position);
  else
    d.feed(std::uint64_t{0});
  d.feed(std::uint64_t{ls.scene.audibility == Audibility::plane ? 1u : 0u});
}

void feed_drone(Digest& d, const io::LoadedDrone& ld) {
  for (const Point3& m : ld.body.mics) d.feed(m);
  d.feed(std::uint64_t{ld.body.loudspeaker ? 1u : 0u});
  if (ld.body.loudspeaker) d.feed(*ld.body.loudspeaker);
  const Eigen::Quaterniond& q = ld.pose.rotation;
  d.feed(q.w()).feed(q.x()).feed(q.y()).feed(q.z());
  d.feed(ld.pose.translation);
}

void print_result_table(const io::ResultFile& r) {
  std::printf("detected %zu wall%s\n", r.walls.size(),
              r.walls.size() == 1 ? "" : "s");
  if (r.walls.empty()) return;
  std::printf(
      "  #   normal                              offset      residual    "
      "consistency\n");
  for (std::size_t w = 0; w < r.walls.size(); ++w) {
    const DetectedWall& d = r.walls[w];
    std::printf("  %-3zu (%+9.6f, %+9.6f, %+9.6f) %11.6f   %9.3e   %9.3e%s\n",
                w, d.plane.normal.x(), d.plane.normal.y(), d.plane.normal.z(),
                d.plane.offset, d.residual, d.consistency,
                !r.ghost.empty() && r.ghost[w] ? "  GHOST" : "");
  }
}

void print_diagnostics(const DetectionDiagnostics& d) {
  std::fprintf(stderr,
               "tuples %zu, candidates %zu, accepted %zu, inconsistent %zu, "
               "degenerate %zu, merged %zu\n",
               d.raw_tuples, d.candidates, d.accepted, d.inconsistent,
               d.degenerate, d.merged);
}

int cmd_simulate(const std::string& scene_path, const std::string& drone_path,
                 std::uint64_t seed, double sigma_t, bool with_truth,
                 const std::string& out_path, bool quiet) {
  if (sigma_t < 0.0) throw SchemaError("--sigma-t: must be nonnegative");
  const io::LoadedScene ls =
      io::scene_from_json(io::read_json_file(scene_path));
  const io::LoadedDrone ld =
      io::drone_from_json(io::read_json_file(drone_path));

  const EchoSet clean =
      simulate_echoes(ls.scene, ld.body, ld.pose, ls.speed_of_sound);
  const EchoSet noisy = add_noise(clean, NoiseModel{sigma_t, seed});

  std::array<double, 4> direct =
      direct_path_delays(ls.scene, ld.body, ld.pose, ls.speed_of_sound);
  if (sigma_t > 0.0) {
    std::mt19937_64 rng(detail::sub_seed(seed, 1));  // echoes consume the seed
    for (double& t : direct) t += sigma_t * detail::gauss(rng);
  }

  Digest dig;
  dig.feed(std::string_view("simulate")).feed(seed).feed(sigma_t);
  feed_scene(dig, ls);
  feed_drone(dig, ld);

  io::EchoesFile file;
  file.echoes = noisy;
  file.speed_of_sound = ls.speed_of_sound;
  file.has_truth = with_truth;
  file.direct_delays = direct;
  file.seed = seed;
  file.sigma_t = sigma_t;
  file.config_digest = dig.value();
  io::write_json_file(out_path, io::echoes_to_json(file));

  if (!quiet) {
    std::printf("wrote %s\n", out_path.c_str());
    for (std::size_t i = 0; i < 4; ++i)
      std::printf("  mic %zu: %zu echoes\n", i, file.echoes.mics[i].size());
  }
  return kOk;
}

int cmd_reconstruct(const std::string& echoes_path,
                    const std::string& drone_path,
                    const std::string& source_spec, double epsilon,
                    double consistency_tol, const std::string& method,
                    std::uint64_t seed, const std::string& out_path,
                    bool quiet) {
  const std::optional<Point3> fixed = parse_source_spec(source_spec);
  const io::EchoesFile ef =
      io::echoes_from_json(io::read_json_file(echoes_path));
  const io::LoadedDrone ld =
      io::drone_from_json(io::read_json_file(drone_path));

  std::array<Point3, 4> mics;
  for (std::size_t i = 0; i < 4; ++i)
    mics[i] = pose_apply(ld.pose, ld.body.mics[i]);

  Point3 L;
  if (fixed) {
    L = *fixed;
  } else {
    if (!ef.direct_delays) {
      std::cerr << "source error: " << echoes_path
                << " carries no direct_delays; pass --source fixed:<x,y,z>\n";
      return kSourceExit;
    }
    const LocalizedSource loc = localize_loudspeaker(
        *ef.direct_delays, mics, ef.speed_of_sound, ef.echoes.t0);
    L = loc.position;
    if (log_level() >= 1)
      std::fprintf(stderr,
                   "localized source (%g, %g, %g), consistency %.3e\n", L.x(),
                   L.y(), L.z(), loc.consistency);
  }

  DetectionOptions opts;
  opts.c = ef.speed_of_sound;
  opts.t0 = ef.echoes.t0;
  if (epsilon > 0.0) {
    if (method == "rank")
      opts.rank_tol = epsilon;
    else
      opts.epsilon_sort = epsilon;
  }
  if (consistency_tol > 0.0) opts.consistency_tol = consistency_tol;

  DetectionDiagnostics diag;
  const std::vector<DetectedWall> walls =
      method == "rank" ? detect_walls_rank(ef.echoes, mics, L, opts, &diag)
                       : detect_walls(ef.echoes, mics, L, opts, &diag);

  Digest dig;
  dig.feed(std::string_view("reconstruct")).feed(seed);
  dig.feed(std::string_view(method));
  dig.feed(opts.epsilon_sort).feed(opts.rank_tol).feed(opts.consistency_tol);
  dig.feed(ef.echoes.t0).feed(ef.speed_of_sound);
  for (std::size_t i = 0; i < 4; ++i) {
    dig.feed(std::uint64_t{ef.echoes.mics[i].size()});
    for (const Echo& e : ef.echoes.mics[i]) dig.feed(e.delay);
  }
  for (const Point3& m : mics) dig.feed(m);
  dig.feed(L);

  io::ResultFile rf;
  rf.walls = walls;
  rf.diagnostics = diag;
  rf.source = L;
  rf.method = method;
  rf.epsilon = method == "rank" ? opts.rank_tol : opts.epsilon_sort;
  rf.seed = seed;
  rf.config_digest = dig.value();
  io::write_json_file(out_path, io::result_to_json(rf));

  if (!quiet) print_result_table(rf);
  if (log_level() >= 1) print_diagnostics(diag);
  return kOk;
}

int cmd_montecarlo(const std::string& scene_path,
                   const std::string& drone_path, std::uint64_t trials,
                   std::uint64_t seed, const std::string& box_spec,
                   const std::string& out_path, bool quiet) {
  const io::LoadedScene ls =
      io::scene_from_json(io::read_json_file(scene_path));
  const io::LoadedDrone ld =
      io::drone_from_json(io::read_json_file(drone_path));
  const Box box =
      box_spec.empty() ? default_box(ls.scene) : parse_box_spec(box_spec);

  MonteCarloOptions options;
  options.detection.c = ls.speed_of_sound;
  options.keep_reports = true;

  const MonteCarloSummary summary =
      monte_carlo(ls.scene, ld.body, trials, seed, box, options);

  const std::string csv_path = csv_sibling(out_path);
  io::write_json_file(out_path, io::summary_to_json(summary));
  io::write_text_file(csv_path, io::montecarlo_csv(summary));

  if (!quiet) {
    const auto u = [](std::uint64_t v) {
      return static_cast<unsigned long long>(v);
    };
    std::printf("trials             %llu\n", u(summary.trials));
    std::printf("ghost trials       %llu\n", u(summary.ghost_trial_count));
    std::printf("degenerate trials  %llu\n", u(summary.degenerate_trials));
    std::printf("complete trials    %llu\n", u(summary.complete_trials));
    std::printf("wrote %s and %s\n", out_path.c_str(), csv_path.c_str());
  }
  return kOk;
}

int cmd_ghost_demo(double perturb, std::uint64_t seed,
                   const std::string& out_path, bool quiet) {
  std::optional<GhostSceneBundle> bundle;
  try {
    bundle = build_ghost_scene(perturb);
  } catch (const Error& e) {
    std::cerr << "self-check failed: " << e.what() << "\n";
    return kSelfCheckExit;
  }
  const GhostSceneBundle& g = *bundle;

  const EchoSet echoes = simulate_echoes(g.scene, g.body, g.pose);
  std::array<Point3, 4> mics;
  for (std::size_t i = 0; i < 4; ++i)
    mics[i] = pose_apply(g.pose, g.body.mics[i]);

  DetectionOptions opts;
  DetectionDiagnostics diag;
  const std::vector<DetectedWall> walls =
      detect_walls(echoes, mics, g.source, opts, &diag);

  const double extent = detail::scene_extent(g.scene);
  std::vector<bool> flags;
  for (const DetectedWall& d : walls) {
    bool genuine = false;
    for (const Wall& w : g.scene.walls)
      if (same_plane(d.plane, w.plane, 1e-6, 1e-6 * extent)) {
        genuine = true;
        break;
      }
    flags.push_back(!genuine);
  }

  bool analytic_hit = false;  // a detection matching the predicted plane
  bool unexpected = false;    // a flagged wall that is not the prediction
  for (std::size_t w = 0; w < walls.size(); ++w) {
    if (!flags[w]) continue;
    if (same_plane(walls[w].plane, g.ghost_plane, 1e-8, 1e-8 * extent))
      analytic_hit = true;
    else
      unexpected = true;
  }

  io::ResultFile rf;
  rf.walls = walls;
  rf.ghost = flags;
  rf.ghost_plane = g.ghost_plane;
  rf.diagnostics = diag;
  rf.source = g.source;
  rf.method = "cm";
  rf.epsilon = opts.epsilon_sort;
  rf.seed = seed;
  rf.config_digest =
      Digest().feed(std::string_view("ghost-demo")).feed(perturb).feed(seed)
          .value();

  // Scene and drone files go next to the result so the run can be replayed
  // through simulate/reconstruct.
  io::write_json_file(sibling(out_path, "_scene.json"),
                      io::scene_to_json(g.scene));
  io::write_json_file(sibling(out_path, "_drone.json"),
                      io::drone_to_json(g.body));
  io::write_json_file(out_path, io::result_to_json(rf));

  if (!quiet) {
    print_result_table(rf);
    if (analytic_hit)
      std::printf("ghost plane detected, matching the analytic prediction\n");
    else
      std::printf("no ghost detected%s\n",
                  perturb != 0.0 ? " (walls perturbed)" : "");
  }
  if (log_level() >= 1) print_diagnostics(diag);

  const bool expects_ghost = perturb == 0.0;
  if (unexpected || analytic_hit != expects_ghost) {
    std::cerr << "self-check failed: "
              << (unexpected            ? "unexpected spurious wall"
                  : expects_ghost       ? "predicted ghost not detected"
                                        : "ghost survived the perturbation")
              << "\n";
    return kSelfCheckExit;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"first-order echoes: simulation, echo sorting, wall recovery"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out_path;
  bool quiet = false;
  app.add_option("--seed", seed, "seed for every random draw")
      ->capture_default_str();
  app.add_option("--out", out_path, "output path (per-command default)");
  app.add_flag("--quiet", quiet, "suppress the summary printout");

  auto* sim =
      app.add_subcommand("simulate", "simulate first-order echo delays");
  std::string sim_scene;
  std::string sim_drone;
  double sigma_t = 0.0;
  bool with_truth = false;
  sim->add_option("scene", sim_scene, "scene JSON")->required();
  sim->add_option("drone", sim_drone, "drone JSON")->required();
  sim->add_option("--sigma-t", sigma_t, "delay noise sigma, seconds")
      ->capture_default_str();
  sim->add_flag("--with-truth", with_truth, "include ground-truth labels");
  sim->fallthrough();

  auto* rec =
      app.add_subcommand("reconstruct", "recover walls from echo delays");
  std::string rec_echoes;
  std::string rec_drone;
  std::string source_spec = "auto";
  std::string method = "cm";
  double epsilon = -1.0;
  double consistency_tol = -1.0;
  rec->add_option("echoes", rec_echoes, "echoes JSON")->required();
  rec->add_option("drone", rec_drone, "drone JSON")->required();
  rec->add_option("--source", source_spec, "auto or fixed:<x,y,z>")
      ->capture_default_str();
  rec->add_option("--epsilon", epsilon,
                  "acceptance tolerance for the chosen method");
  rec->add_option("--consistency-tol", consistency_tol,
                  "realizability bound on recovered mirror points");
  rec->add_option("--method", method, "cm or rank")
      ->check(CLI::IsMember({"cm", "rank"}))
      ->capture_default_str();
  rec->fallthrough();

  auto* mc = app.add_subcommand("montecarlo", "random-pose ghost census");
  std::string mc_scene;
  std::string mc_drone;
  std::string box_spec;
  std::uint64_t trials = 1000;
  mc->add_option("scene", mc_scene, "scene JSON")->required();
  mc->add_option("drone", mc_drone, "drone JSON")->required();
  mc->add_option("--trials", trials, "number of random poses")
      ->capture_default_str();
  mc->add_option("--box", box_spec,
                 "pose box x0,y0,z0,x1,y1,z1 (default: middle of the scene)");
  mc->fallthrough();

  auto* gd =
      app.add_subcommand("ghost-demo", "parallel-wall ghost construction");
  double perturb = 0.0;
  gd->add_option("--perturb", perturb,
                 "offset shift applied to the first wall, meters")
      ->capture_default_str();
  gd->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed())
      return cmd_simulate(sim_scene, sim_drone, seed, sigma_t, with_truth,
                          out_path.empty() ? "echoes.json" : out_path, quiet);
    if (rec->parsed())
      return cmd_reconstruct(rec_echoes, rec_drone, source_spec, epsilon,
                             consistency_tol, method, seed,
                             out_path.empty() ? "result.json" : out_path,
                             quiet);
    if (mc->parsed())
      return cmd_montecarlo(mc_scene, mc_drone, trials, seed, box_spec,
                            out_path.empty() ? "montecarlo.json" : out_path,
                            quiet);
    if (gd->parsed())
      return cmd_ghost_demo(perturb, seed,
                            out_path.empty() ? "ghost_demo.json" : out_path,
                            quiet);
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return kSchemaExit;
  } catch (const MissingLoudspeaker& e) {
    std::cerr << "source error: " << e.what() << "\n";
    return kSourceExit;
  } catch (const Error& e) {
    std::cerr << "invariant violated: " << e.what() << "\n";
    return kGeometryExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kOk;
}
