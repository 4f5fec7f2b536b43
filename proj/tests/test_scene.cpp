#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mmsense/dsp.hpp"
#include "mmsense/scene.hpp"

using namespace mmsense;

namespace {

std::size_t count_kind(const Scene& s, ScattererKind k) {
  return static_cast<std::size_t>(std::count_if(s.scatterers.begin(), s.scatterers.end(),
                                                [&](const Scatterer& x) { return x.kind == k; }));
}

Scene single(double b, double d, double amp, const RadarConfig& cfg) {
  Scene s;
  s.scatterers.push_back(scatterer_at_bins(b, d, amp, cfg));
  return s;
}

}  // namespace

TEST_CASE("empty scene without noise gives an all-zero burst") {
  const RadarConfig cfg;
  const auto scene = make_scene(ScenePreset::empty, 1);
  CHECK(scene.scatterers.empty());
  CHECK_FALSE(scene.label);
  Scene quiet = scene;
  quiet.noise_std = 0.0;
  const auto b = synthesize_burst(quiet, cfg, 0.0);
  CHECK(b.matches(cfg));
  CHECK(std::all_of(b.data.begin(), b.data.end(), [](Complex z) { return z == Complex{}; }));
}

TEST_CASE("single scatterer gives identical exponentials on every chirp") {
  const RadarConfig cfg;
  const auto b = synthesize_burst(single(10, 0, 1.0, cfg), cfg, 0.0);
  const int N = cfg.samples();
  for (int p = 0; p < cfg.chirps(); ++p)
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < cfg.channels(); ++c) {
        const double a = 2.0 * std::numbers::pi * 10.0 * n / N;
        CHECK(std::abs(b.at(p, n, c) - Complex(std::cos(a), std::sin(a))) < 1e-12);
        CHECK(std::abs(b.at(p, n, c) - b.at(0, n, c)) < 1e-12);
      }
}

TEST_CASE("superposition of two scatterers") {
  const RadarConfig cfg;
  Scene s1 = single(10, 2, 0.7, cfg);
  Scene s2 = single(23.5, -3.25, 1.3, cfg);
  s2.scatterers[0].channel_phases = {0.1, 2.0, -1.0};
  Scene both = s1;
  both.scatterers.push_back(s2.scatterers[0]);
  for (double t : {0.0, 0.04, 0.37}) {
    const auto a = synthesize_burst(s1, cfg, t);
    const auto b = synthesize_burst(s2, cfg, t);
    const auto ab = synthesize_burst(both, cfg, t);
    double worst = 0.0;
    for (std::size_t i = 0; i < ab.data.size(); ++i) worst = std::max(worst, std::abs(ab.data[i] - (a.data[i] + b.data[i])));
    CHECK(worst <= 1e-12);
  }
}

TEST_CASE("synthesis is deterministic in scene, time and seed") {
  const RadarConfig cfg;
  const auto scene = make_scene(ScenePreset::crowd_one_metal, 99, cfg);
  const auto a = synthesize_burst(scene, cfg, 0.12, 5);
  const auto b = synthesize_burst(make_scene(ScenePreset::crowd_one_metal, 99, cfg), cfg, 0.12, 5);
  CHECK(a.data == b.data);
  CHECK(a.timestamp_us == 120000);
  const auto c = synthesize_burst(make_scene(ScenePreset::crowd_one_metal, 100, cfg), cfg, 0.12, 5);
  CHECK(a.data != c.data);
  const auto d = synthesize_burst(scene, cfg, 0.16, 5);
  CHECK(a.data != d.data);
}

TEST_CASE("noise has the requested spread") {
  const RadarConfig cfg;
  Scene s;
  s.noise_std = 0.5;
  s.rng_seed = 3;
  const auto b = synthesize_burst(s, cfg, 0.0);
  double power = 0.0;
  for (auto z : b.data) power += std::norm(z);
  power /= static_cast<double>(b.data.size());
  CHECK(power == doctest::Approx(0.25).epsilon(0.08));
}

TEST_CASE("scatterer leaving the range window is named in the error") {
  const RadarConfig cfg;
  Scene s;
  s.scatterers.push_back(scatterer_at_bins(10, 0, 1.0, cfg));
  s.scatterers.push_back(scatterer_at_bins(1, 0, 1.0, cfg));
  s.scatterers[1].velocity_mps = 1.0;  // approaching: range shrinks
  CHECK_NOTHROW(synthesize_burst(s, cfg, 0.1));
  try {
    synthesize_burst(s, cfg, 0.5);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("scatterer 1") != std::string::npos);
  }
  Scene far;
  far.scatterers.push_back(scatterer_at_bins(63.9, 0, 1.0, cfg));
  far.scatterers[0].velocity_mps = -1.0;
  CHECK_THROWS_AS(synthesize_burst(far, cfg, 1.0), Error);
}

TEST_CASE("presets") {
  const RadarConfig cfg;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto person = make_scene(ScenePreset::person, seed, cfg);
    CHECK(person.scatterers.size() >= 5);
    CHECK(person.scatterers.size() <= 10);
    CHECK(person.metal_count() == 0);
    CHECK_FALSE(person.label);

    const auto pm = make_scene(ScenePreset::person_with_metal, seed, cfg);
    CHECK(pm.metal_count() == 1);
    CHECK(pm.label);

    const auto crowd = make_scene(ScenePreset::crowd_one_metal, seed, cfg);
    CHECK(crowd.scatterers.size() >= 26);
    CHECK(crowd.scatterers.size() <= 51);
    CHECK(crowd.metal_count() == 1);
    CHECK(crowd.label);

    const auto acc = make_scene(ScenePreset::crowd_with_accessories, seed, cfg);
    CHECK(acc.metal_count() == 0);
    CHECK(count_kind(acc, ScattererKind::accessory) >= 5);
    CHECK_FALSE(acc.label);

    for (const auto* sc : {&person, &pm, &crowd, &acc}) {
      for (const auto& s : sc->scatterers) {
        CHECK(std::abs(s.velocity_mps) <= 1.0);
        CHECK(s.range_m >= 0.0);
        CHECK(s.range_m < max_range(cfg));
        CHECK(s.channel_phases.size() == 3u);
        switch (s.kind) {
          case ScattererKind::body: CHECK((s.amplitude >= 0.2 && s.amplitude <= 0.6)); break;
          case ScattererKind::metal: CHECK((s.amplitude >= 1.5 && s.amplitude <= 2.5)); break;
          case ScattererKind::accessory: CHECK((s.amplitude >= 0.05 && s.amplitude <= 0.15)); break;
        }
      }
    }
  }
  CHECK(parse_preset("crowd_one_metal") == ScenePreset::crowd_one_metal);
  CHECK_FALSE(parse_preset("nobody").has_value());
  CHECK(to_string(ScenePreset::person) == "person");
}

TEST_CASE("metal is co-located with a person") {
  const RadarConfig cfg;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = make_scene(ScenePreset::person_with_metal, seed, cfg);
    const auto& metal = *std::find_if(s.scatterers.begin(), s.scatterers.end(),
                                      [](const Scatterer& x) { return x.kind == ScattererKind::metal; });
    double nearest = 1e9;
    for (const auto& x : s.scatterers)
      if (x.kind == ScattererKind::body) nearest = std::min(nearest, std::abs(x.range_m - metal.range_m));
    CHECK(nearest < 0.5);
  }
}

TEST_CASE("specular flicker scales the metal amplitude per burst") {
  const RadarConfig cfg;
  Scene s = single(20, 0, 2.0, cfg);
  s.scatterers[0].kind = ScattererKind::metal;
  s.specular_flicker = true;
  s.rng_seed = 4;
  std::vector<double> peaks;
  for (int k = 0; k < 20; ++k) {
    const auto ard = dsp::process_burst(synthesize_burst(s, cfg, k * 0.04));
    peaks.push_back(ard.at(20, 8, 0) / (cfg.samples() * cfg.chirps()));
  }
  for (double p : peaks) {
    CHECK(p >= 2.0 * 0.3 - 1e-9);
    CHECK(p <= 2.0 * 1.0 + 1e-9);
  }
  CHECK(*std::max_element(peaks.begin(), peaks.end()) - *std::min_element(peaks.begin(), peaks.end()) > 0.1);
}
