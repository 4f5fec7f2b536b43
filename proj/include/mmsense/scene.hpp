#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "mmsense/radar.hpp"

namespace mmsense {

enum class ScenePreset { empty, person, person_with_metal, crowd_with_accessories, crowd_one_metal };

std::string_view to_string(ScenePreset preset);
std::optional<ScenePreset> parse_preset(std::string_view name);
/// True for the presets whose scene carries a metal object.
bool preset_has_metal(ScenePreset preset);

enum class ScattererKind { body, accessory, metal };

/// A point reflector. Velocity is radial and positive toward the radar, so
/// range shrinks over time for positive velocities.
struct Scatterer {
  double range_m = 0.0;
  double velocity_mps = 0.0;
  double amplitude = 0.0;
  std::vector<double> channel_phases;
  ScattererKind kind = ScattererKind::body;

  double range_at(double t_s) const { return range_m - velocity_mps * t_s; }
};

/// Tunable generator constants. These are simulation knobs, not measured
/// values.
struct SceneKnobs {
  double body_amp_min = 0.2, body_amp_max = 0.6;
  double metal_amp_min = 1.5, metal_amp_max = 2.5;
  double accessory_amp_min = 0.05, accessory_amp_max = 0.15;
  int cluster_min = 5, cluster_max = 10;
  int crowd_size = 5;
  int accessories_min = 1, accessories_max = 2;  // per person, inside the cluster count
  double person_range_min = 1.5, person_range_max = 3.0;
  double cluster_spread_m = 0.25;
  double max_speed_mps = 1.0;
  double limb_speed_mps = 0.2;  // per-scatterer spread around the person's speed
  double noise_std = 0.05;
  bool specular_flicker = false;
  double flicker_min = 0.3, flicker_max = 1.0;
};

struct Scene {
  std::vector<Scatterer> scatterers;
  double noise_std = 0.0;
  bool label = false;  // metal present
  std::uint64_t rng_seed = 0;
  bool specular_flicker = false;
  double flicker_min = 0.3, flicker_max = 1.0;

  std::size_t metal_count() const;
};

/// Builds one of the named scenes. Deterministic in `seed`.
Scene make_scene(ScenePreset preset, std::uint64_t seed, const RadarConfig& config = {},
                 const SceneKnobs& knobs = {});

/// Builds the metal-bearing or metal-free member of a preset's family:
/// person/person_with_metal, crowd_with_accessories/crowd_one_metal, and for
/// `empty` either nothing or a lone metal object.
Scene make_scene_variant(ScenePreset family, bool with_metal, std::uint64_t seed,
                         const RadarConfig& config = {}, const SceneKnobs& knobs = {});

/// Scatterer placed at (fractional) range/Doppler bins; Doppler is signed
/// relative to the zero-velocity bin. Phases default to zero on every channel.
Scatterer scatterer_at_bins(double range_bin, double doppler_bin, double amplitude,
                            const RadarConfig& config, std::vector<double> channel_phases = {});

/// Throws Error naming the first scatterer that is out of range (or has the
/// wrong phase count) at time t.
void validate_scene(const Scene& scene, const RadarConfig& config, double t_s);

/// Idealized post-mixing beat signal of every scatterer at time t, plus
/// seeded complex Gaussian noise:
///   data[p][n][c] = sum A * e^{i2pi b n/N} * e^{i2pi d p/P} * e^{i phi_c} + noise
/// where (b, d) are the scatterer's bins at time t. Noise and flicker are
/// keyed on (rng_seed, t rounded to microseconds).
RawBurst synthesize_burst(const Scene& scene, const RadarConfig& config, double t_s,
                          std::uint32_t burst_id = 0);

}  // namespace mmsense
