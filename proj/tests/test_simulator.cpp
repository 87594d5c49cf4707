#include <catch2/catch_amalgamated.hpp>

#include <echoroom/simulator.hpp>

#include "helpers.hpp"

using namespace echoroom;

namespace {

Wall square_wall_z0(double half = 1.0) {
  return Wall({Point3(-half, -half, 0), Point3(half, -half, 0),
               Point3(half, half, 0), Point3(-half, half, 0)});
}

}  // namespace

TEST_CASE("mirror_point basics", "[simulator]") {
  const Wall wall = square_wall_z0();
  CHECK((mirror_point(wall, Point3(0, 0, 2)) - Point3(0, 0, -2)).norm() < 1e-15);
  // a source already on the plane maps to itself
  CHECK((mirror_point(wall, Point3(0.2, 0.1, 0)) - Point3(0.2, 0.1, 0)).norm() <
        1e-15);

  // wall y=2 seen from the origin
  const Wall y2(test::rect_face({-10, 2, -10}, {10, 2, -10}, {10, 2, 10},
                                {-10, 2, 10}));
  CHECK((mirror_point(y2, Point3(0, 0, 0)) - Point3(0, 4, 0)).norm() < 1e-12);
}

TEST_CASE("specular_visible symmetric hit", "[simulator]") {
  const Wall wall = square_wall_z0();
  // reflection point is the origin, well inside the square
  CHECK(specular_visible(wall, Point3(0, 0, 1), Point3(0, 0, 2)));
}

TEST_CASE("specular_visible reflection point off the polygon", "[simulator]") {
  const Wall wall = square_wall_z0();
  // source (0,0,1), mic (10,0,1): the segment from the mirror point (0,0,-1)
  // to the mic crosses z=0 at (5,0,0), outside the square
  CHECK_FALSE(specular_visible(wall, Point3(0, 0, 1), Point3(10, 0, 1)));
  // with an infinite plane the same pair is audible
  CHECK(specular_visible(wall, Point3(0, 0, 1), Point3(10, 0, 1),
                         Audibility::plane));
}

TEST_CASE("specular_visible side tests", "[simulator]") {
  const Wall wall = square_wall_z0();
  // mic behind the wall
  CHECK_FALSE(specular_visible(wall, Point3(0, 0, 1), Point3(0, 0, -2)));
  // mic exactly on the plane
  CHECK_FALSE(specular_visible(wall, Point3(0, 0, 1), Point3(0.1, 0.1, 0)));
  // source exactly on the plane
  CHECK_FALSE(specular_visible(wall, Point3(0.1, 0, 0), Point3(0, 0, 2)));
}

TEST_CASE("specular_visible boundary slack", "[simulator]") {
  const Wall wall = square_wall_z0();
  // reflection point lands exactly on the edge x=1
  const Point3 src(1, 0, 1), mic(1, 0, 2);
  CHECK(specular_visible(wall, src, mic));
  // nudge it just past the edge
  CHECK_FALSE(specular_visible(wall, Point3(1.001, 0, 1), Point3(1.001, 0, 2)));
}

TEST_CASE("one wall heard by all four mics round trips", "[simulator]") {
  const DroneBody body = test::standard_body();
  const Wall wall(test::rect_face({-10, -10, -1}, {10, -10, -1}, {10, 10, -1},
                                  {-10, 10, -1}));
  const Scene scene({wall}, DroneSource{});
  const Pose pose(Eigen::Quaterniond::Identity(), Point3(0, 0, 1.5));

  const EchoSet echoes = simulate_echoes(scene, body, pose);
  for (std::size_t i = 0; i < 4; ++i) {
    REQUIRE(echoes.mics[i].size() == 1);
    CHECK(echoes.mics[i][0].wall == 0);
  }
}

TEST_CASE("two wall corner layout gives two echoes per mic", "[simulator]") {
  // walls y=2 and x=3 with the source at the origin; every mic sits in the
  // quadrant that faces both walls
  const Wall wy(test::rect_face({-20, 2, -20}, {20, 2, -20}, {20, 2, 20},
                                {-20, 2, 20}));
  const Wall wx(test::rect_face({3, -20, -20}, {3, 20, -20}, {3, 20, 20},
                                {3, -20, 20}));
  const DroneBody body({Point3(1, 1, 0), Point3(-1, 1, 0), Point3(-1, -1, 0),
                        Point3(1, -1, 0.5)});
  const Scene scene({wy, wx}, FixedSource{Point3(0, 0, 0)});
  const EchoSet echoes = simulate_echoes(scene, body, Pose{});

  for (std::size_t i = 0; i < 4; ++i) REQUIRE(echoes.mics[i].size() == 2);

  // mirror points are (0,4,0) and (6,0,0)
  const double c = kSpeedOfSound;
  const double d1 = (Point3(0, 4, 0) - Point3(1, 1, 0)).norm() / c;
  const double d2 = (Point3(6, 0, 0) - Point3(1, 1, 0)).norm() / c;
  std::vector<double> want{d1, d2};
  std::sort(want.begin(), want.end());
  const auto got = echoes.delays(0);
  CHECK(got[0] == Catch::Approx(want[0]).epsilon(1e-12));
  CHECK(got[1] == Catch::Approx(want[1]).epsilon(1e-12));
}

TEST_CASE("a wall can be invisible to a single mic", "[simulator]") {
  // small patch of ceiling directly above mic 1; mic far to the side misses it
  const Wall patch(test::rect_face({-0.5, -0.5, 2}, {0.5, -0.5, 2},
                                   {0.5, 0.5, 2}, {-0.5, 0.5, 2}));
  const DroneBody body({Point3(0, 0, 0), Point3(0.1, 0, 0), Point3(0, 0.1, 0),
                        Point3(8, 0, 0.1)});
  const Scene scene({patch}, FixedSource{Point3(0, 0, 0.5)});
  const EchoSet echoes = simulate_echoes(scene, body, Pose{});

  CHECK(echoes.mics[0].size() == 1);
  CHECK(echoes.mics[1].size() == 1);
  CHECK(echoes.mics[2].size() == 1);
  CHECK(echoes.mics[3].empty());
}

TEST_CASE("delays match the image distances under arbitrary poses",
          "[simulator]") {
  std::mt19937_64 rng(42);
  const DroneBody body = test::standard_body();
  const auto walls = test::box_room(6.0, 5.0, 3.0);
  const Scene scene(walls, DroneSource{});
  const Box box(Point3(1.5, 1.5, 1.0), Point3(4.5, 3.5, 2.0));
  const double c = kSpeedOfSound;

  for (int trial = 0; trial < 50; ++trial) {
    const Pose pose = random_pose(rng, box);
    const EchoSet echoes = simulate_echoes(scene, body, pose, c, 0.25);
    const Point3 source = resolve_source(scene, body, pose);
    std::size_t total = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      const Point3 mic = pose_apply(pose, body.mics[i]);
      double prev = -1.0;
      for (const Echo& e : echoes.mics[i]) {
        REQUIRE(e.delay >= prev);
        prev = e.delay;
        const Wall& w = scene.walls[static_cast<std::size_t>(e.wall)];
        const Point3 s = mirror_point(w, source);
        REQUIRE((s - e.mirror).norm() < 1e-12);
        const double want = 0.25 + (s - mic).norm() / c;
        REQUIRE(std::abs(e.delay - want) <= 1e-12 * want);
        // ground truth reproduces the squared distance used downstream
        const double dist2 = c * c * (e.delay - 0.25) * (e.delay - 0.25);
        REQUIRE(dist2 == Catch::Approx((s - mic).squaredNorm()).epsilon(1e-10));
        ++total;
      }
    }
    REQUIRE(total == 24);  // deep inside a shoebox, every wall reaches every mic
  }
}

TEST_CASE("direct path delays", "[simulator]") {
  const DroneBody body = test::standard_body();
  const Wall far_wall(test::rect_face({-50, -50, -20}, {50, -50, -20},
                                      {50, 50, -20}, {-50, 50, -20}));

  // co-located source and mic 1
  const Scene at_mic({far_wall}, FixedSource{Point3(0, 0, 0)});
  const auto zero = direct_path_delays(at_mic, body, Pose{});
  CHECK(zero[0] == Catch::Approx(0.0).margin(1e-15));

  // one sound-second away from mic 1
  const Scene far({far_wall}, FixedSource{Point3(0, 0, 343.0)});
  const auto one = direct_path_delays(far, body, Pose{}, 343.0);
  CHECK(one[0] == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("scene validation", "[simulator]") {
  CHECK_THROWS_AS(Scene({}, DroneSource{}), Error);
  // fixed source sitting on the wall plane
  CHECK_THROWS_AS(Scene({square_wall_z0()}, FixedSource{Point3(0.1, 0.2, 0)}),
                  DegenerateSource);
}

TEST_CASE("missing loudspeaker is rejected", "[simulator]") {
  DroneBody body({Point3(0, 0, 0), Point3(0.4, 0, 0), Point3(0, 0.3, 0),
                  Point3(0.1, 0.1, 0.25)});
  REQUIRE_FALSE(body.loudspeaker.has_value());
  const Scene scene({square_wall_z0()}, DroneSource{});
  CHECK_THROWS_AS(simulate_echoes(scene, body, Pose{}), MissingLoudspeaker);
  CHECK_THROWS_AS(direct_path_delays(scene, body, Pose{}), MissingLoudspeaker);
}

TEST_CASE("drone source on a wall plane is rejected at simulate time",
          "[simulator]") {
  const DroneBody body = test::standard_body();
  const Scene scene({square_wall_z0(5.0)}, DroneSource{});
  // place the pose so the loudspeaker lands exactly on z=0
  const Pose pose(Eigen::Quaterniond::Identity(),
                  Point3(0, 0, -body.loudspeaker->z()));
  CHECK_THROWS_AS(simulate_echoes(scene, body, pose), DegenerateSource);
}

TEST_CASE("add_noise with zero sigma is the identity", "[simulator]") {
  const DroneBody body = test::standard_body();
  const Scene scene(test::box_room(6, 5, 3), DroneSource{});
  const Pose pose(Eigen::Quaterniond::Identity(), Point3(3, 2.5, 1.5));
  const EchoSet clean = simulate_echoes(scene, body, pose);
  const EchoSet same = add_noise(clean, NoiseModel{0.0, 7});
  for (std::size_t i = 0; i < 4; ++i) {
    REQUIRE(same.mics[i].size() == clean.mics[i].size());
    for (std::size_t k = 0; k < clean.mics[i].size(); ++k)
      REQUIRE(same.mics[i][k].delay == clean.mics[i][k].delay);
  }
}

TEST_CASE("add_noise is reproducible and labels follow their delays",
          "[simulator]") {
  const DroneBody body = test::standard_body();
  const Scene scene(test::box_room(6, 5, 3), DroneSource{});
  const Pose pose(Eigen::Quaterniond::Identity(), Point3(3, 2.5, 1.5));
  const EchoSet clean = simulate_echoes(scene, body, pose);

  const NoiseModel nm{1e-5, 1234};
  const EchoSet a = add_noise(clean, nm);
  const EchoSet b = add_noise(clean, nm);
  for (std::size_t i = 0; i < 4; ++i) {
    REQUIRE(a.mics[i].size() == b.mics[i].size());
    for (std::size_t k = 0; k < a.mics[i].size(); ++k) {
      REQUIRE(a.mics[i][k].delay == b.mics[i][k].delay);
      REQUIRE(a.mics[i][k].wall == b.mics[i][k].wall);
    }
    // delays stay sorted and each wall label still appears exactly once
    std::vector<int> labels;
    double prev = -1.0;
    for (const Echo& e : a.mics[i]) {
      REQUIRE(e.delay >= prev);
      prev = e.delay;
      labels.push_back(e.wall);
    }
    std::sort(labels.begin(), labels.end());
    REQUIRE(labels == std::vector<int>{0, 1, 2, 3, 4, 5});
  }
  // each label still pairs with its own mirror point
  const Point3 source = resolve_source(scene, body, pose);
  for (std::size_t i = 0; i < 4; ++i)
    for (const Echo& e : a.mics[i]) {
      const Wall& w = scene.walls[static_cast<std::size_t>(e.wall)];
      REQUIRE((e.mirror - mirror_point(w, source)).norm() < 1e-12);
    }
}

TEST_CASE("add_noise is unbiased in the mean", "[simulator][slow]") {
  const DroneBody body = test::standard_body();
  const Scene scene(test::box_room(6, 5, 3), DroneSource{});
  const Pose pose(Eigen::Quaterniond::Identity(), Point3(3, 2.5, 1.5));
  const EchoSet clean = simulate_echoes(scene, body, pose);

  const double sigma = 1e-4;
  double sum = 0.0;
  std::size_t n = 0;
  // 24 delays per run; accumulate enough runs for ~1e5 samples
  for (std::uint64_t seed = 0; n < 100000; ++seed) {
    const EchoSet noisy = add_noise(clean, NoiseModel{sigma, seed});
    for (std::size_t i = 0; i < 4; ++i) {
      // compare against the clean delay with the same ground-truth label
      for (const Echo& e : noisy.mics[i])
        for (const Echo& ec : clean.mics[i])
          if (ec.wall == e.wall) {
            sum += e.delay - ec.delay;
            ++n;
          }
    }
  }
  const double mean = sum / static_cast<double>(n);
  CHECK(std::abs(mean) <= 4.0 * sigma / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("box room geometry sanity", "[simulator]") {
  const auto walls = test::box_room(6.0, 5.0, 3.0);
  REQUIRE(walls.size() == 6);
  const Point3 inside(3, 2.5, 1.5);
  for (const Wall& w : walls) {
    // interior point is one consistent side of each wall
    CHECK(std::abs(w.plane.signed_distance(inside)) > 1.0);
  }
}
