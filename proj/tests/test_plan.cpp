#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "emsim/plan.hpp"

using namespace emsim;

TEST_CASE("default plans validate and resolve to full grids") {
  for (const char* profile : {"desk", "paper"}) {
    auto p = default_plan(profile);
    CHECK_NOTHROW(validate_plan(p));
    auto r = resolve_plan(p);
    CHECK(r.apps.size() == 15);
    CHECK(r.phases.size() == 4);
    CHECK(r.sweep.obfuscation_power_db.size() == 4);
    CHECK(std::isinf(r.sweep.obfuscation_power_db[0]));
    CHECK(r.band_centers_hz.size() == 5);
  }
  CHECK_THROWS_AS(default_plan("lab"), InvalidArgument);

  // The paper profile keeps the same spectral layout at 10x the rate.
  auto d = default_plan("desk");
  auto pp = default_plan("paper");
  CHECK(pp.sample_rate_hz == 10.0 * d.sample_rate_hz);
  CHECK(pp.pipeline.chunk_samples == 10 * d.pipeline.chunk_samples);
}

TEST_CASE("plan JSON round-trips including the -inf daemon power") {
  auto p = default_plan("desk");
  p.apps = {"arcade", "chess"};
  p.seeds_per_cell = 2;
  auto text = plan_to_json(p);
  auto back = plan_from_json(text);

  CHECK(back.name == p.name);
  CHECK(back.sample_rate_hz == p.sample_rate_hz);
  CHECK(back.band_centers_hz == p.band_centers_hz);
  CHECK(back.apps == p.apps);
  CHECK(back.phases == p.phases);
  CHECK(back.seeds_per_cell == p.seeds_per_cell);
  CHECK(back.master_seed == p.master_seed);
  CHECK(back.channel.antenna_gain_dbi == p.channel.antenna_gain_dbi);
  CHECK(back.noise.noise_power_db == p.noise.noise_power_db);
  CHECK(std::isinf(back.obfuscation.power_db));
  CHECK(back.obfuscation.power_db < 0.0);
  CHECK(back.obfuscation.daemon_clocks.size() == 3);
  CHECK(back.appid_train.epochs == p.appid_train.epochs);
  CHECK(back.sweep.distances_m == p.sweep.distances_m);
  CHECK(back.sweep.obfuscation_power_db == p.sweep.obfuscation_power_db);

  // Serialization is canonical: a round-trip reproduces the exact text and
  // therefore the hash.
  CHECK(plan_to_json(back) == text);
  CHECK(plan_hash(back) == plan_hash(p));

  auto tweaked = p;
  tweaked.master_seed += 1;
  CHECK(plan_hash(tweaked) != plan_hash(p));

  CHECK_THROWS_AS(plan_from_json("{oops"), IoError);
}

TEST_CASE("scene expansion walks the whole grid with per-capture grouping") {
  auto p = default_plan("desk");
  p.apps = {"arcade", "racer", "gallery"};
  p.phases = {ActivityPhase::Running, ActivityPhase::Exiting};
  p.distances_m = {1.0, 2.0};
  p.orientations_deg = {90.0};
  p.seeds_per_cell = 2;

  auto scenes = expand_scenes(p);
  const std::size_t n_captures = 3 * 2 * 2 * 1 * 2;
  REQUIRE(scenes.size() == n_captures * 5);

  std::map<std::uint64_t, std::size_t> per_capture;
  std::set<std::uint64_t> seeds;
  for (const auto& sc : scenes) {
    per_capture[sc.capture_id]++;
    seeds.insert(sc.seed);
    CHECK_NOTHROW(validate_scene(sc));
    CHECK(sc.sample_rate_hz == p.sample_rate_hz);
    CHECK(sc.duration_s == p.duration_s);
    CHECK(sc.channel.antenna_gain_dbi == p.channel.antenna_gain_dbi);
  }
  CHECK(per_capture.size() == n_captures);
  for (const auto& [id, count] : per_capture) CHECK(count == 5);
  // Every band scene draws a distinct seed.
  CHECK(seeds.size() == scenes.size());

  // Bands of one capture share channel and differ only in center/index.
  for (std::size_t b = 0; b < 5; ++b) {
    CHECK(scenes[b].capture_id == scenes[0].capture_id);
    CHECK(scenes[b].band_index == static_cast<int>(b));
    CHECK(scenes[b].band_center_hz == p.band_centers_hz[b]);
    CHECK(scenes[b].signature.app_id == "arcade");
  }

  // Ambience is drawn per capture and band; carrier counts stay in range.
  for (const auto& sc : scenes) {
    CHECK(sc.interference.carriers.size() >=
          static_cast<std::size_t>(p.ambience.min_carriers));
    CHECK(sc.interference.carriers.size() <=
          static_cast<std::size_t>(p.ambience.max_carriers));
    for (const auto& c : sc.interference.carriers) {
      CHECK(std::fabs(c.offset_hz) <= p.ambience.max_offset_frac * p.sample_rate_hz);
      CHECK(c.power_db >= p.ambience.power_db_lo);
      CHECK(c.power_db <= p.ambience.power_db_hi);
    }
  }

  auto scenes2 = expand_scenes(p);
  REQUIRE(scenes2.size() == scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    CHECK(scenes2[i].seed == scenes[i].seed);
    CHECK(scenes2[i].capture_id == scenes[i].capture_id);
  }

  auto reseeded = p;
  reseeded.master_seed = p.master_seed + 1;
  auto scenes3 = expand_scenes(reseeded);
  CHECK(scenes3[0].seed != scenes[0].seed);
}

TEST_CASE("probe scenes pin their ambience below the band center") {
  auto p = default_plan("desk");
  auto catalog = build_default_catalog(p.sample_rate_hz);
  const auto& app = find_app(catalog, "sandbox");

  auto probe = make_probe_scene(p, app, ActivityPhase::Running, 2.0, 135.0, 0.1, 4, 0);
  CHECK(probe.channel.distance_m == 2.0);
  CHECK(probe.channel.orientation_deg == 135.0);
  CHECK(probe.duration_s == 0.1);
  CHECK(probe.band_index == 0);
  CHECK(probe.band_center_hz == p.band_centers_hz[0]);
  REQUIRE(probe.interference.carriers.size() == 3);
  for (const auto& c : probe.interference.carriers) CHECK(c.offset_hz < 0.0);
  CHECK_NOTHROW(validate_scene(probe));

  auto probe2 = make_probe_scene(p, app, ActivityPhase::Running, 2.0, 135.0, 0.1, 4, 0);
  CHECK(probe2.seed == probe.seed);
  auto probe3 = make_probe_scene(p, app, ActivityPhase::Running, 2.0, 135.0, 0.1, 5, 0);
  CHECK(probe3.seed != probe.seed);

  // Probe seeds avoid the dataset grid's seed space.
  auto scenes = expand_scenes(p);
  std::set<std::uint64_t> grid_seeds;
  for (const auto& sc : scenes) grid_seeds.insert(sc.seed);
  for (std::size_t idx = 0; idx < 50; ++idx)
    CHECK(grid_seeds.count(
              make_probe_scene(p, app, ActivityPhase::Running, 1.0, 90.0, 0.1, idx, 0).seed) == 0);
}

TEST_CASE("the strongest analytic line sits on the band-0 carrier region") {
  auto p = default_plan("desk");
  auto catalog = build_default_catalog(p.sample_rate_hz);
  for (const auto& app : catalog) {
    const double f = strongest_line_freq(app, ActivityPhase::Running, 0, p.band_centers_hz[0]);
    const double off = f - p.band_centers_hz[0];
    // Band-0 primaries lay their f0 between 150 and 1085 kHz; the strongest
    // mixing product stays within a modulation span of that.
    CHECK(off > 100e3);
    CHECK(off < 1.2e6);
    // Offsets fit the displayed band.
    CHECK(std::fabs(off) < p.sample_rate_hz / 2.0);
  }
  const auto& arcade = find_app(catalog, "arcade");
  CHECK_THROWS_AS(strongest_line_freq(arcade, ActivityPhase::Running, 2, 0.0), InvalidArgument);

  // Colliding apps share their strongest band-0 line by construction.
  CHECK(strongest_line_freq(find_app(catalog, "arcade"), ActivityPhase::Running, 0, 0.0) ==
        strongest_line_freq(find_app(catalog, "racer"), ActivityPhase::Running, 0, 0.0));
}

TEST_CASE("plan validation rejects malformed grids") {
  auto p = default_plan("desk");
  p.band_centers_hz = {600e6, 600e6};
  CHECK_THROWS_AS(validate_plan(p), InvalidArgument);
  p = default_plan("desk");
  p.band_centers_hz.clear();
  CHECK_THROWS_AS(validate_plan(p), InvalidArgument);
  p = default_plan("desk");
  p.seeds_per_cell = 0;
  CHECK_THROWS_AS(validate_plan(p), InvalidArgument);
  p = default_plan("desk");
  p.train_ratio = 0.5;
  CHECK_THROWS_AS(validate_plan(p), InvalidArgument);
  p = default_plan("desk");
  p.profile = "bench";
  CHECK_THROWS_AS(validate_plan(p), InvalidArgument);
  p = default_plan("desk");
  p.ambience.max_carriers = p.ambience.min_carriers - 1;
  CHECK_THROWS_AS(validate_plan(p), InvalidArgument);
}
