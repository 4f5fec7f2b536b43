#include "mmsense/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

#include "mmsense/rng.hpp"

namespace mmsense {

namespace {

constexpr std::array<std::pair<ScenePreset, std::string_view>, 5> kPresetNames{{
    {ScenePreset::empty, "empty"},
    {ScenePreset::person, "person"},
    {ScenePreset::person_with_metal, "person_with_metal"},
    {ScenePreset::crowd_with_accessories, "crowd_with_accessories"},
    {ScenePreset::crowd_one_metal, "crowd_one_metal"},
}};

std::vector<double> random_phases(Rng& rng, int channels) {
  std::vector<double> phases(static_cast<std::size_t>(channels));
  for (auto& p : phases) p = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return phases;
}

struct Person {
  double range_m;
  double velocity_mps;
};

Person add_person(Scene& scene, Rng& rng, const RadarConfig& config, const SceneKnobs& knobs,
                  bool with_accessories) {
  const Person person{rng.uniform(knobs.person_range_min, knobs.person_range_max),
                      rng.uniform(-0.8 * knobs.max_speed_mps, 0.8 * knobs.max_speed_mps)};
  const int count = rng.uniform_int(knobs.cluster_min, knobs.cluster_max);
  const int accessories =
      with_accessories ? std::min(count - 1, rng.uniform_int(knobs.accessories_min,
                                                             knobs.accessories_max))
                       : 0;
  for (int i = 0; i < count; ++i) {
    Scatterer s;
    s.range_m = person.range_m + rng.uniform(-knobs.cluster_spread_m, knobs.cluster_spread_m);
    s.velocity_mps = std::clamp(
        person.velocity_mps + rng.uniform(-knobs.limb_speed_mps, knobs.limb_speed_mps),
        -knobs.max_speed_mps, knobs.max_speed_mps);
    if (i < accessories) {
      s.kind = ScattererKind::accessory;
      s.amplitude = rng.uniform(knobs.accessory_amp_min, knobs.accessory_amp_max);
    } else {
      s.kind = ScattererKind::body;
      s.amplitude = rng.uniform(knobs.body_amp_min, knobs.body_amp_max);
    }
    s.channel_phases = random_phases(rng, config.channels());
    scene.scatterers.push_back(std::move(s));
  }
  return person;
}

void add_metal(Scene& scene, Rng& rng, const RadarConfig& config, const SceneKnobs& knobs,
               Person carrier) {
  Scatterer s;
  s.kind = ScattererKind::metal;
  s.range_m = carrier.range_m + rng.uniform(-0.5, 0.5) * knobs.cluster_spread_m;
  s.velocity_mps = carrier.velocity_mps;
  s.amplitude = rng.uniform(knobs.metal_amp_min, knobs.metal_amp_max);
  s.channel_phases = random_phases(rng, config.channels());
  scene.scatterers.push_back(std::move(s));
}

// e^{i 2pi k m / n} with the phase reduced modulo one period first.
Complex unit_phasor(double bin, int index, int length) {
  const double turns = std::fmod(bin * index, static_cast<double>(length)) / length;
  return std::polar(1.0, 2.0 * std::numbers::pi * turns);
}

std::uint64_t time_key(double t_s) { return static_cast<std::uint64_t>(std::llround(t_s * 1e6)); }

}  // namespace

std::string_view to_string(ScenePreset preset) {
  for (const auto& [p, name] : kPresetNames) {
    if (p == preset) return name;
  }
  return "unknown";
}

std::optional<ScenePreset> parse_preset(std::string_view name) {
  for (const auto& [p, n] : kPresetNames) {
    if (n == name) return p;
  }
  return std::nullopt;
}

bool preset_has_metal(ScenePreset preset) {
  return preset == ScenePreset::person_with_metal || preset == ScenePreset::crowd_one_metal;
}

std::size_t Scene::metal_count() const {
  return static_cast<std::size_t>(std::count_if(
      scatterers.begin(), scatterers.end(),
      [](const Scatterer& s) { return s.kind == ScattererKind::metal; }));
}

Scene make_scene_variant(ScenePreset family, bool with_metal, std::uint64_t seed,
                         const RadarConfig& config, const SceneKnobs& knobs) {
  Rng rng(derive_seed({seed, 0x5ce4e}));
  Scene scene;
  scene.noise_std = knobs.noise_std;
  scene.rng_seed = seed;
  scene.label = with_metal;
  scene.specular_flicker = knobs.specular_flicker;
  scene.flicker_min = knobs.flicker_min;
  scene.flicker_max = knobs.flicker_max;

  switch (family) {
    case ScenePreset::empty:
      if (with_metal) {
        add_metal(scene, rng, config, knobs,
                  {rng.uniform(knobs.person_range_min, knobs.person_range_max), 0.0});
      }
      break;
    case ScenePreset::person:
    case ScenePreset::person_with_metal: {
      const Person p = add_person(scene, rng, config, knobs, false);
      if (with_metal) add_metal(scene, rng, config, knobs, p);
      break;
    }
    case ScenePreset::crowd_with_accessories:
    case ScenePreset::crowd_one_metal: {
      std::vector<Person> people;
      for (int i = 0; i < knobs.crowd_size; ++i) {
        people.push_back(add_person(scene, rng, config, knobs, true));
      }
      if (with_metal) {
        const auto carrier = static_cast<std::size_t>(rng.uniform_int(0, knobs.crowd_size - 1));
        add_metal(scene, rng, config, knobs, people[carrier]);
      }
      break;
    }
  }
  return scene;
}

Scene make_scene(ScenePreset preset, std::uint64_t seed, const RadarConfig& config,
                 const SceneKnobs& knobs) {
  return make_scene_variant(preset, preset_has_metal(preset), seed, config, knobs);
}

Scatterer scatterer_at_bins(double range_bin, double doppler_bin, double amplitude,
                            const RadarConfig& config, std::vector<double> channel_phases) {
  const auto phys = bins_to_physical(range_bin, doppler_bin, config);
  Scatterer s;
  s.range_m = phys.range_m;
  s.velocity_mps = phys.velocity_mps;
  s.amplitude = amplitude;
  s.channel_phases = channel_phases.empty()
                         ? std::vector<double>(static_cast<std::size_t>(config.channels()), 0.0)
                         : std::move(channel_phases);
  return s;
}

void validate_scene(const Scene& scene, const RadarConfig& config, double t_s) {
  if (!(scene.noise_std >= 0.0)) throw Error("scene noise_std must be >= 0");
  const double r_max = max_range(config);
  for (std::size_t i = 0; i < scene.scatterers.size(); ++i) {
    const auto& s = scene.scatterers[i];
    const double r = s.range_at(t_s);
    std::ostringstream os;
    if (!(r >= 0.0 && r < r_max)) {
      os << "scatterer " << i << " at range " << r << " m (t=" << t_s
         << " s) is outside [0, " << r_max << ") m";
    } else if (!(s.amplitude >= 0.0)) {
      os << "scatterer " << i << " has negative amplitude " << s.amplitude;
    } else if (s.channel_phases.size() != static_cast<std::size_t>(config.channels())) {
      os << "scatterer " << i << " has " << s.channel_phases.size() << " channel phases, expected "
         << config.channels();
    }
    if (!os.str().empty()) throw Error(os.str());
  }
}

RawBurst synthesize_burst(const Scene& scene, const RadarConfig& config, double t_s,
                          std::uint32_t burst_id) {
  validate_scene(scene, config, t_s);
  const int P = config.chirps();
  const int N = config.samples();
  const int C = config.channels();

  RawBurst burst(config);
  burst.burst_id = burst_id;
  burst.timestamp_us = time_key(t_s);

  Rng flicker(derive_seed({scene.rng_seed, time_key(t_s), 2}));
  std::vector<Complex> fast(static_cast<std::size_t>(N));
  std::vector<Complex> slow(static_cast<std::size_t>(P));
  std::vector<Complex> chan(static_cast<std::size_t>(C));
  for (const auto& s : scene.scatterers) {
    const auto bins = physical_to_bins(s.range_at(t_s), s.velocity_mps, config);
    double amplitude = s.amplitude;
    if (scene.specular_flicker && s.kind == ScattererKind::metal) {
      amplitude *= flicker.uniform(scene.flicker_min, scene.flicker_max);
    }
    for (int n = 0; n < N; ++n) fast[n] = unit_phasor(bins.range_bin, n, N);
    for (int p = 0; p < P; ++p) slow[p] = unit_phasor(bins.doppler_bin, p, P);
    for (int c = 0; c < C; ++c) chan[c] = std::polar(amplitude, s.channel_phases[c]);
    for (int p = 0; p < P; ++p) {
      for (int n = 0; n < N; ++n) {
        const Complex pn = fast[n] * slow[p];
        for (int c = 0; c < C; ++c) burst.at(p, n, c) += chan[c] * pn;
      }
    }
  }

  if (scene.noise_std > 0.0) {
    Rng noise(derive_seed({scene.rng_seed, time_key(t_s), 1}));
    const double sigma = scene.noise_std / std::numbers::sqrt2;
    for (auto& v : burst.data) {
      const double re = noise.normal();
      const double im = noise.normal();
      v += Complex(sigma * re, sigma * im);
    }
  }
  return burst;
}

}  // namespace mmsense
