// mmsense command-line entry point.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <thread>

#include "mmsense/bench.hpp"
#include "mmsense/checkpoint.hpp"
#include "mmsense/config_file.hpp"
#include "mmsense/dataset.hpp"
#include "mmsense/rng.hpp"
#include "mmsense/stream.hpp"
#include "mmsense/train.hpp"

namespace fs = std::filesystem;
using namespace mmsense;

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted.store(true); }

/// Requests stop on `source` once SIGINT/SIGTERM arrives.
class SignalStop {
 public:
  explicit SignalStop(std::stop_source& source)
      : watcher_([&source](std::stop_token st) {
          while (!st.stop_requested()) {
            if (g_interrupted.load()) {
              source.request_stop();
              return;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
          }
        }) {
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
  }

 private:
  std::jthread watcher_;
};

RadarConfig radar_config(const std::string& path) {
  return path.empty() ? RadarConfig{} : load_radar_config(path);
}

ScenePreset preset_arg(const std::string& name) {
  if (auto p = parse_preset(name)) return *p;
  throw CLI::ValidationError("--preset", "unknown preset '" + name + "'");
}

transdope::TransDopeConfig model_config_for(const Dataset& ds) {
  transdope::TransDopeConfig c;
  c.seq_len = ds.frames_per_record;
  c.range_bins = ds.range_bins;
  c.doppler_bins = ds.doppler_bins;
  c.channels = ds.channels;
  return c;
}

void print_epoch(const char* stage, const transdope::EpochRecord& r) {
  std::cerr << stage << " epoch " << r.epoch << " lr=" << r.learning_rate << " loss=" << r.loss
            << " acc=" << r.accuracy << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mmsense: synthetic mmWave radar pipeline with TransDope metal detection"};
  app.require_subcommand(1);
  std::string config_path;
  std::uint64_t seed = 7;
  app.add_option("--config", config_path, "key=value file overriding radar defaults")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "seed for every random choice");

  // generate
  auto* gen = app.add_subcommand("generate", "write a labelled ARD sequence dataset");
  std::string gen_preset = "person_with_metal";
  std::size_t gen_frames = 0;
  std::string gen_out = "dataset.ards";
  int gen_seq_len = 8;
  bool gen_flicker = false;
  gen->add_option("--preset", gen_preset, "scene preset family")->capture_default_str();
  gen->add_option("--frames", gen_frames, "number of labelled sequences (>= 1)")->required();
  gen->add_option("--out", gen_out, "output dataset path")->capture_default_str();
  gen->add_option("--seq-len", gen_seq_len, "frames per sequence")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_flag("--flicker", gen_flicker, "per-burst metal amplitude jitter");

  // train
  auto* tr = app.add_subcommand("train", "pretrain the time convolutions and train TransDope");
  std::string tr_data, tr_pretrain, tr_out = "model.tdop", tr_history;
  transdope::TrainConfig tr_cfg;
  int tr_pre_epochs = 3;
  tr->add_option("--data", tr_data, "training dataset")->required()->check(CLI::ExistingFile);
  tr->add_option("--pretrain", tr_pretrain, "dataset whose frames pretrain the time convolutions");
  tr->add_option("--out", tr_out, "checkpoint path")->capture_default_str();
  tr->add_option("--history", tr_history, "per-epoch CSV (default: <out>.history.csv)");
  tr->add_option("--epochs", tr_cfg.epochs)->capture_default_str();
  tr->add_option("--batch", tr_cfg.batch)->capture_default_str();
  tr->add_option("--lr", tr_cfg.lr0)->capture_default_str();
  tr->add_option("--pretrain-epochs", tr_pre_epochs)->capture_default_str();

  // infer
  auto* inf = app.add_subcommand("infer", "score every sequence of a dataset");
  std::string inf_model, inf_data, inf_out;
  double inf_threshold = 0.5;
  inf->add_option("--model", inf_model)->required()->check(CLI::ExistingFile);
  inf->add_option("--data", inf_data)->required()->check(CLI::ExistingFile);
  inf->add_option("--out", inf_out, "CSV of index,label,probability,decision");
  inf->add_option("--threshold", inf_threshold)->capture_default_str();

  // produce
  auto* prod = app.add_subcommand("produce", "serve synthetic bursts over TCP");
  std::string prod_preset = "crowd_one_metal", prod_endpoint = "127.0.0.1:5555";
  double prod_rate = 25.0;
  std::uint64_t prod_max = 0;
  prod->add_option("--preset", prod_preset)->capture_default_str();
  prod->add_option("--endpoint", prod_endpoint, "host:port to listen on")->capture_default_str();
  prod->add_option("--rate", prod_rate, "bursts per second")->capture_default_str()->check(CLI::PositiveNumber);
  prod->add_option("--max-bursts", prod_max, "stop after this many bursts (0 = run forever)");

  // consume
  auto* cons = app.add_subcommand("consume", "receive bursts and emit detections");
  std::string cons_endpoint = "127.0.0.1:5555", cons_model, cons_out;
  double cons_threshold = 0.5;
  std::uint64_t cons_max = 0;
  cons->add_option("--endpoint", cons_endpoint)->capture_default_str();
  cons->add_option("--model", cons_model)->required()->check(CLI::ExistingFile);
  cons->add_option("--out", cons_out, "detections CSV (default: stdout)");
  cons->add_option("--threshold", cons_threshold)->capture_default_str();
  cons->add_option("--max-bursts", cons_max, "stop after this many bursts (0 = until the producer closes)");

  // bench
  auto* bn = app.add_subcommand("bench", "time decode, DSP and inference");
  std::string bn_model, bn_out;
  bench::BenchOptions bn_opts;
  bn->add_option("--model", bn_model, "checkpoint (default: freshly initialized weights)")
      ->check(CLI::ExistingFile);
  bn->add_option("--bursts", bn_opts.bursts)->capture_default_str()->check(CLI::PositiveNumber);
  bn->add_flag("--pipeline", bn_opts.pipeline, "staged concurrent mode");
  bn->add_option("--rate", bn_opts.rate_hz, "pipeline feed rate, 0 = unpaced")->capture_default_str();
  bn->add_option("--out", bn_out, "also write the report here");

  CLI11_PARSE(app, argc, argv);

  try {
    const RadarConfig radar = radar_config(config_path);

    if (*gen) {
      if (gen_frames < 1) throw CLI::ValidationError("--frames", "must be at least 1");
      DatasetOptions opts;
      opts.frames_per_record = gen_seq_len;
      opts.knobs.specular_flicker = gen_flicker;
      const Dataset ds = generate_dataset(preset_arg(gen_preset), gen_frames, radar, seed, opts);
      write_dataset(gen_out, ds);
      std::size_t positives = 0;
      for (std::size_t i = 0; i < ds.size(); ++i) positives += ds.label(i);
      std::cout << "wrote " << ds.size() << " sequences (" << positives << " with metal) to " << gen_out << '\n';
      return 0;
    }

    if (*tr) {
      tr_cfg.seed = seed;
      tr_cfg.validate();
      const Dataset data = read_dataset(tr_data);
      const auto mcfg = model_config_for(data);
      auto model = transdope::make_model(mcfg, derive_seed({seed, 1}));
      if (!tr_pretrain.empty() && fs::exists(tr_pretrain)) {
        const Dataset frames = read_dataset(tr_pretrain);
        transdope::TrainConfig pcfg = tr_cfg;
        pcfg.epochs = tr_pre_epochs;
        pcfg.seed = derive_seed({seed, 2});
        const auto pre = transdope::pretrain_time_convs(
            frames, mcfg, pcfg, [](const transdope::EpochRecord& r) { print_epoch("pretrain", r); });
        transdope::transfer_time_convs(model, pre);
      } else {
        std::cerr << "warning: "
                  << (tr_pretrain.empty() ? std::string("no pretrain dataset given")
                                          : "pretrain dataset " + tr_pretrain + " not found")
                  << "; training from scratch\n";
      }
      const auto history = transdope::train(model, data, tr_cfg,
                                            [](const transdope::EpochRecord& r) { print_epoch("train", r); });
      transdope::save_checkpoint(tr_out, model);
      const std::string hist_path = tr_history.empty() ? tr_out + ".history.csv" : tr_history;
      std::ofstream h(hist_path);
      if (!h) throw Error("cannot write " + hist_path);
      h << "epoch,learning_rate,loss,accuracy\n" << std::setprecision(9);
      for (const auto& r : history) h << r.epoch << ',' << r.learning_rate << ',' << r.loss << ',' << r.accuracy << '\n';
      std::cout << "saved " << tr_out << " (" << transdope::param_count(model) << " parameters), history "
                << hist_path << '\n';
      return 0;
    }

    if (*inf) {
      const auto model = transdope::load_checkpoint(inf_model);
      const Dataset data = read_dataset(inf_data);
      std::ofstream csv;
      if (!inf_out.empty()) {
        csv.open(inf_out);
        if (!csv) throw Error("cannot write " + inf_out);
        csv << "index,label,probability,decision\n" << std::setprecision(9);
      }
      std::size_t correct = 0;
      for (std::size_t i = 0; i < data.size(); ++i) {
        const double p = transdope::forward(data.record(i), model);
        const bool decision = p >= inf_threshold;
        correct += decision == data.label(i);
        if (csv.is_open()) csv << i << ',' << int(data.label(i)) << ',' << p << ',' << int(decision) << '\n';
      }
      std::cout << "accuracy=" << static_cast<double>(correct) / static_cast<double>(data.size()) << " ("
                << correct << "/" << data.size() << ")\n";
      return 0;
    }

    if (*prod) {
      stream::ProducerOptions opts;
      opts.preset = preset_arg(prod_preset);
      opts.endpoint = net::Endpoint::parse(prod_endpoint);
      opts.rate_hz = prod_rate;
      opts.seed = seed;
      opts.config = radar;
      if (prod_max > 0) opts.max_bursts = prod_max;
      opts.on_listening = [&](std::uint16_t port) {
        std::cerr << "listening on " << opts.endpoint.host << ':' << port << '\n';
      };
      std::stop_source stop;
      SignalStop guard(stop);
      const auto stats = stream::run_producer(opts, stop.get_token());
      std::cerr << "generated=" << stats.generated << " sent=" << stats.sent << " dropped=" << stats.dropped
                << " lost_on_disconnect=" << stats.lost_on_disconnect << " connections=" << stats.connections
                << '\n';
      return 0;
    }

    if (*cons) {
      const auto model = transdope::load_checkpoint(cons_model);
      stream::ConsumerOptions opts;
      opts.endpoint = net::Endpoint::parse(cons_endpoint);
      opts.model = &model;
      opts.threshold = cons_threshold;
      if (cons_max > 0) opts.max_bursts = cons_max;
      std::ofstream file;
      if (!cons_out.empty()) {
        file.open(cons_out);
        if (!file) throw Error("cannot write " + cons_out);
      }
      std::ostream& out = cons_out.empty() ? std::cout : file;
      out << "burst_id,probability,decision,latency_us\n" << std::setprecision(9);
      std::stop_source stop;
      SignalStop guard(stop);
      const auto stats = stream::run_consumer(
          opts,
          [&](const wire::Detection& d) {
            out << d.last_burst_id << ',' << d.probability << ',' << int(d.decision) << ','
                << d.inference_latency_us << '\n';
            out.flush();
          },
          stop.get_token());
      std::cerr << "received=" << stats.frames_received << " processed=" << stats.bursts_processed
                << " detections=" << stats.detections << " dropped=" << stats.dropped
                << " malformed=" << stats.malformed << " crc_errors=" << stats.crc_errors << '\n';
      return 0;
    }

    if (*bn) {
      bn_opts.seed = seed;
      bn_opts.config = radar;
      const auto model = bn_model.empty()
                             ? transdope::make_model(transdope::TransDopeConfig::for_radar(radar), seed)
                             : transdope::load_checkpoint(bn_model);
      const auto text = bench::format_report(bench::run_bench(model, bn_opts));
      std::cout << text;
      if (!bn_out.empty()) {
        std::ofstream f(bn_out);
        if (!f) throw Error("cannot write " + bn_out);
        f << text;
      }
      return 0;
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
