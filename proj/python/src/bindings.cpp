#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "mmsense/bench.hpp"
#include "mmsense/checkpoint.hpp"
#include "mmsense/config_file.hpp"
#include "mmsense/dataset.hpp"
#include "mmsense/dsp.hpp"
#include "mmsense/scene.hpp"
#include "mmsense/train.hpp"
#include "mmsense/wire.hpp"

namespace py = pybind11;
using namespace mmsense;
using transdope::TransDopeModel;

namespace {

using ComplexArray = py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>;
using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

ComplexArray burst_to_array(const RawBurst& b) {
  ComplexArray out({b.chirps, b.samples, b.channels});
  std::memcpy(out.mutable_data(), b.data.data(), b.data.size() * sizeof(Complex));
  return out;
}

RawBurst array_to_burst(const ComplexArray& a, std::uint32_t burst_id) {
  if (a.ndim() != 3) throw Error("burst array must have shape (chirps, samples, channels)");
  RawBurst b;
  b.burst_id = burst_id;
  b.chirps = static_cast<int>(a.shape(0));
  b.samples = static_cast<int>(a.shape(1));
  b.channels = static_cast<int>(a.shape(2));
  b.data.assign(a.data(), a.data() + a.size());
  return b;
}

py::array_t<double> ard_to_array(const ArdFrame& f) {
  py::array_t<double> out({f.range_bins, f.doppler_bins, f.channels});
  std::memcpy(out.mutable_data(), f.values.data(), f.values.size() * sizeof(double));
  return out;
}

std::span<const float> as_span(const FloatArray& a) { return {a.data(), static_cast<std::size_t>(a.size())}; }

py::dict report_to_dict(const bench::BenchReport& r) {
  auto stats = [](const bench::LatencyStats& s) {
    py::dict d;
    d["count"] = s.count;
    d["min_us"] = s.min;
    d["mean_us"] = s.mean;
    d["p95_us"] = s.p95;
    d["max_us"] = s.max;
    return d;
  };
  py::dict d;
  d["mode"] = r.mode;
  d["machine"] = r.machine;
  d["bursts"] = r.bursts;
  d["processed"] = r.processed;
  d["detections"] = r.detections;
  d["drops"] = r.drops;
  d["wall_s"] = r.wall_s;
  d["throughput"] = r.throughput;
  d["decode"] = stats(r.decode);
  d["dsp"] = stats(r.dsp);
  d["inference"] = stats(r.inference);
  d["total"] = stats(r.total);
  d["sequence_1x8_ms"] = r.sequence_1x8_ms;
  d["sequence_2x8_ms"] = r.sequence_2x8_ms;
  d["ratio_2x8"] = r.ratio_2x8;
  d["per_frame_ms"] = r.per_frame_ms;
  return d;
}

ScenePreset preset_from(const std::string& name) {
  const auto p = parse_preset(name);
  if (!p) throw Error("unknown preset '" + name + "'");
  return *p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Synthetic FMCW radar, range-Doppler processing and the TransDope classifier.";
  py::register_exception<Error>(m, "Error", PyExc_ValueError);

  py::class_<RadarConfig>(m, "RadarConfig")
      .def(py::init([](int chirps, int samples, int channels, double prf_hz, double burst_rate_hz,
                       double center_freq_hz, double bandwidth_hz) {
             RadarParams p;
             p.chirps_per_burst = chirps;
             p.samples_per_chirp = samples;
             p.channels = channels;
             p.prf_hz = prf_hz;
             p.burst_rate_hz = burst_rate_hz;
             p.center_freq_hz = center_freq_hz;
             p.bandwidth_hz = bandwidth_hz;
             return RadarConfig(p);
           }),
           py::arg("chirps_per_burst") = 16, py::arg("samples_per_chirp") = 64, py::arg("channels") = 3,
           py::arg("prf_hz") = 2000.0, py::arg("burst_rate_hz") = 25.0, py::arg("center_freq_hz") = 60e9,
           py::arg("bandwidth_hz") = 1e9)
      .def_static("load", &load_radar_config, py::arg("path"))
      .def_property_readonly("chirps", &RadarConfig::chirps)
      .def_property_readonly("samples", &RadarConfig::samples)
      .def_property_readonly("channels", &RadarConfig::channels)
      .def_property_readonly("prf_hz", &RadarConfig::prf_hz)
      .def_property_readonly("burst_rate_hz", &RadarConfig::burst_rate_hz)
      .def_property_readonly("wavelength_m", &RadarConfig::wavelength_m)
      .def_property_readonly("range_resolution", [](const RadarConfig& c) { return range_resolution(c); })
      .def_property_readonly("max_range", [](const RadarConfig& c) { return max_range(c); })
      .def_property_readonly("velocity_resolution", [](const RadarConfig& c) { return velocity_resolution(c); })
      .def_property_readonly("max_velocity", [](const RadarConfig& c) { return max_unambiguous_velocity(c); })
      .def("__eq__", &RadarConfig::operator==);

  m.def(
      "physical_to_bins",
      [](double range_m, double velocity_mps, const RadarConfig& c) {
        const auto b = physical_to_bins(range_m, velocity_mps, c);
        return py::make_tuple(b.range_bin, b.doppler_bin);
      },
      py::arg("range_m"), py::arg("velocity_mps"), py::arg("config") = RadarConfig{});

  m.def("presets", [] {
    std::vector<std::string> names;
    for (auto p : {ScenePreset::empty, ScenePreset::person, ScenePreset::person_with_metal,
                   ScenePreset::crowd_with_accessories, ScenePreset::crowd_one_metal})
      names.emplace_back(to_string(p));
    return names;
  });

  m.def(
      "synthesize_burst",
      [](const std::string& preset, std::uint64_t seed, double t_s, const RadarConfig& c) {
        return burst_to_array(synthesize_burst(make_scene(preset_from(preset), seed, c), c, t_s));
      },
      py::arg("preset"), py::arg("seed"), py::arg("t_s") = 0.0, py::arg("config") = RadarConfig{},
      "Raw burst of a preset scene at time t, shape (chirps, samples, channels).");
  m.def(
      "point_burst",
      [](double range_bin, double doppler_bin, double amplitude, const RadarConfig& c) {
        Scene s;
        s.scatterers.push_back(scatterer_at_bins(range_bin, doppler_bin, amplitude, c));
        return burst_to_array(synthesize_burst(s, c, 0.0));
      },
      py::arg("range_bin"), py::arg("doppler_bin"), py::arg("amplitude") = 1.0, py::arg("config") = RadarConfig{},
      "Noise-free burst of one scatterer at (signed) bin coordinates.");
  m.def(
      "process_burst",
      [](const ComplexArray& burst, bool hann) {
        dsp::Options o;
        o.hann_window = hann;
        const RawBurst b = array_to_burst(burst, 0);
        ArdFrame frame;
        {
          py::gil_scoped_release release;
          frame = dsp::process_burst(b, o);
        }
        return ard_to_array(frame);
      },
      py::arg("burst"), py::arg("hann_window") = false,
      "Range-Doppler magnitudes, shape (range, doppler, channels), zero velocity at doppler P/2.");

  m.def(
      "encode_burst_frame",
      [](const ComplexArray& burst, std::uint32_t burst_id, std::uint64_t timestamp_us) {
        RawBurst b = array_to_burst(burst, burst_id);
        b.timestamp_us = timestamp_us;
        const auto bytes = wire::encode_frame(wire::make_burst_frame(b));
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      },
      py::arg("burst"), py::arg("burst_id"), py::arg("timestamp_us") = 0);
  m.def(
      "decode_burst_frame",
      [](const py::bytes& data, const RadarConfig& c) {
        const std::string s = data;
        const auto frame = wire::decode_frame({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
        const auto b = wire::burst_from_frame(frame, c);
        return py::make_tuple(b.burst_id, b.timestamp_us, burst_to_array(b));
      },
      py::arg("data"), py::arg("config") = RadarConfig{});

  py::class_<Dataset>(m, "Dataset")
      .def_static("read", &read_dataset, py::arg("path"))
      .def("write", [](const Dataset& d, const std::filesystem::path& p) { write_dataset(p, d); })
      .def("__len__", &Dataset::size)
      .def_readonly("frames_per_record", &Dataset::frames_per_record)
      .def_property_readonly("labels", [](const Dataset& d) { return py::array_t<std::uint8_t>(d.labels.size(), d.labels.data()); })
      .def("record", [](const Dataset& d, std::size_t i) {
        if (i >= d.size()) throw py::index_error();
        const auto r = d.record(i);
        return py::array_t<float>({d.frames_per_record, d.range_bins, d.doppler_bins, d.channels}, r.data());
      });
  m.def(
      "generate_dataset",
      [](const std::string& preset, std::size_t records, std::uint64_t seed, int frames_per_record,
         const RadarConfig& c) {
        DatasetOptions o;
        o.frames_per_record = frames_per_record;
        py::gil_scoped_release release;
        return generate_dataset(preset_from(preset), records, c, seed, o);
      },
      py::arg("preset"), py::arg("records"), py::arg("seed"), py::arg("frames_per_record") = 8,
      py::arg("config") = RadarConfig{});

  py::class_<transdope::TransDopeConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("seq_len", &transdope::TransDopeConfig::seq_len)
      .def_readwrite("range_bins", &transdope::TransDopeConfig::range_bins)
      .def_readwrite("doppler_bins", &transdope::TransDopeConfig::doppler_bins)
      .def_readwrite("channels", &transdope::TransDopeConfig::channels)
      .def_readwrite("conv_filters", &transdope::TransDopeConfig::conv_filters)
      .def_readwrite("embed_dim", &transdope::TransDopeConfig::embed_dim)
      .def_readwrite("heads", &transdope::TransDopeConfig::heads)
      .def_readwrite("encoder_layers", &transdope::TransDopeConfig::encoder_layers)
      .def_readwrite("ffn_kernel", &transdope::TransDopeConfig::ffn_kernel)
      .def("param_count", [](const transdope::TransDopeConfig& c) { return transdope::param_count(c); });

  py::class_<TransDopeModel>(m, "Model")
      .def(py::init([](const transdope::TransDopeConfig& c, std::uint64_t seed) { return transdope::make_model(c, seed); }),
           py::arg("config") = transdope::TransDopeConfig{}, py::arg("seed") = 1)
      .def_static("load", [](const std::filesystem::path& p) { return transdope::load_checkpoint(p); }, py::arg("path"))
      .def("save", [](const TransDopeModel& m, const std::filesystem::path& p) { transdope::save_checkpoint(p, m); })
      .def_readonly("config", &TransDopeModel::config)
      .def_property_readonly("param_count", [](const TransDopeModel& m) { return transdope::param_count(m); })
      .def(
          "forward",
          [](const TransDopeModel& m, const FloatArray& seq) {
            if (static_cast<std::size_t>(seq.size()) != m.config.sequence_size())
              throw Error("sequence has " + std::to_string(seq.size()) + " values, the model expects " +
                          std::to_string(m.config.sequence_size()));
            return transdope::forward(as_span(seq), m);
          },
          py::arg("sequence"), "Probability of metal for one (T, N, P, C) sequence.")
      .def("accuracy", [](const TransDopeModel& m, const Dataset& d) { return transdope::evaluate_accuracy(m, d); })
      .def(
          "train",
          [](TransDopeModel& m, const Dataset& d, int epochs, int batch, double lr0, std::uint64_t seed,
             const std::optional<Dataset>& pretrain, int pretrain_epochs) {
            transdope::TrainConfig cfg;
            cfg.epochs = epochs;
            cfg.batch = batch;
            cfg.lr0 = lr0;
            cfg.seed = seed;
            py::gil_scoped_release release;
            if (pretrain) {
              transdope::TrainConfig pcfg = cfg;
              pcfg.epochs = pretrain_epochs;
              pcfg.seed = seed + 1;
              transdope::transfer_time_convs(m, transdope::pretrain_time_convs(*pretrain, m.config, pcfg));
            }
            std::vector<std::tuple<int, double, double, double>> rows;
            for (const auto& r : transdope::train(m, d, cfg))
              rows.emplace_back(r.epoch, r.learning_rate, r.loss, r.accuracy);
            return rows;
          },
          py::arg("dataset"), py::arg("epochs") = 50, py::arg("batch") = 8, py::arg("lr0") = 1e-2,
          py::arg("seed") = 1, py::arg("pretrain") = std::nullopt, py::arg("pretrain_epochs") = 3,
          "Trains in place; returns (epoch, learning_rate, loss, accuracy) rows.");

  m.def(
      "bench",
      [](const TransDopeModel& model, std::uint64_t bursts, bool pipeline, double rate_hz) {
        bench::BenchOptions o;
        o.bursts = bursts;
        o.pipeline = pipeline;
        o.rate_hz = rate_hz;
        bench::BenchReport r;
        {
          py::gil_scoped_release release;
          r = bench::run_bench(model, o);
        }
        return report_to_dict(r);
      },
      py::arg("model"), py::arg("bursts") = 1000, py::arg("pipeline") = false, py::arg("rate_hz") = 0.0);
}
