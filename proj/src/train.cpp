#include "mmsense/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mmsense/rng.hpp"

namespace mmsense::transdope {

namespace {

void check_dataset(const Dataset& ds, const TransDopeConfig& cfg, bool per_frame) {
  if (ds.size() == 0) throw Error("training dataset is empty");
  const bool dims_ok = ds.range_bins == cfg.range_bins && ds.doppler_bins == cfg.doppler_bins &&
                       ds.channels == cfg.channels;
  if (!dims_ok || (!per_frame && ds.frames_per_record != cfg.seq_len)) {
    std::ostringstream os;
    os << "dataset records are " << ds.frames_per_record << "x" << ds.range_bins << "x" << ds.doppler_bins << "x"
       << ds.channels << ", model expects " << (per_frame ? "?" : std::to_string(cfg.seq_len)) << "x"
       << cfg.range_bins << "x" << cfg.doppler_bins << "x" << cfg.channels;
    throw Error(os.str());
  }
}

void shuffle(std::vector<std::size_t>& order, Rng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i - 1)));
    std::swap(order[i - 1], order[j]);
  }
}

void sgd_step(std::vector<ParamRef>& params, const std::vector<ParamRef>& grads, double lr) {
  for (std::size_t k = 0; k < params.size(); ++k) {
    double* w = params[k].data;
    const double* g = grads[k].data;
    for (std::size_t i = 0; i < params[k].size; ++i) w[i] -= lr * g[i];
  }
}

void clear(std::vector<ParamRef>& grads) {
  for (auto& g : grads) std::fill(g.data, g.data + g.size, 0.0);
}

// Shared epoch loop. `sample(index, grad_weight, probability)` runs one
// forward/backward into the gradient buffer and returns the loss.
template <typename Net, typename Sample>
TrainHistory run_sgd(Net& net, std::size_t samples, const std::vector<std::uint8_t>& labels_of,
                     const TrainConfig& config, const EpochCallback& on_epoch, Sample&& sample) {
  config.validate();
  Net grad = zeros_like(net);
  auto params = parameters(net);
  auto grads = parameters(grad);

  Rng rng(derive_seed({config.seed, 0x5dd}));
  std::vector<std::size_t> order(samples);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainHistory history;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = learning_rate(config, epoch);
    shuffle(order, rng);
    double loss_sum = 0.0;
    std::size_t batches = 0, correct = 0;
    for (std::size_t start = 0; start < samples; start += static_cast<std::size_t>(config.batch)) {
      const std::size_t end = std::min(samples, start + static_cast<std::size_t>(config.batch));
      const double weight = 1.0 / static_cast<double>(end - start);
      clear(grads);
      double batch_loss = 0.0;
      auto diverged = [&](const std::string& detail) {
        std::ostringstream os;
        os << "training diverged at epoch " << epoch << ", batch " << batches << " (lr " << lr << "): " << detail;
        return Error(os.str());
      };
      for (std::size_t i = start; i < end; ++i) {
        double p = 0.0;
        try {
          batch_loss += weight * sample(net, grad, order[i], weight, &p);
        } catch (const Error& e) {
          throw diverged(e.what());
        }
        if ((p >= 0.5) == (labels_of[order[i]] != 0)) ++correct;
      }
      if (!std::isfinite(batch_loss)) throw diverged("non-finite loss");
      sgd_step(params, grads, lr);
      loss_sum += batch_loss;
      ++batches;
    }
    EpochRecord rec{epoch, lr, loss_sum / static_cast<double>(batches),
                    static_cast<double>(correct) / static_cast<double>(samples)};
    history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return history;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw Error("epochs must be >= 1");
  if (batch < 1) throw Error("batch must be >= 1");
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw Error("lr0 must be > 0");
  if (decay_every < 1) throw Error("decay_every must be >= 1");
}

double learning_rate(const TrainConfig& config, int epoch) {
  return config.lr0 / (1.0 + std::floor(static_cast<double>(epoch) / config.decay_every));
}

TrainHistory train(TransDopeModel& model, const Dataset& dataset, const TrainConfig& config,
                   const EpochCallback& on_epoch) {
  check_dataset(dataset, model.config, false);
  return run_sgd(model, dataset.size(), dataset.labels, config, on_epoch,
                 [&](const TransDopeModel& net, TransDopeModel& grad, std::size_t idx, double w, double* p) {
                   return accumulate_gradient(dataset.record(idx), dataset.label(idx), net, grad, w, p);
                 });
}

PretrainResult pretrain_time_convs(const Dataset& frames, const TransDopeConfig& model_config,
                                   const TrainConfig& config, const EpochCallback& on_epoch) {
  check_dataset(frames, model_config, true);
  const std::size_t per_record = static_cast<std::size_t>(frames.frames_per_record);
  const std::size_t total = frames.size() * per_record;
  std::vector<std::uint8_t> labels(total);
  for (std::size_t i = 0; i < total; ++i) labels[i] = frames.labels[i / per_record];

  FrameClassifier net = make_frame_classifier(model_config, config.seed);
  const std::size_t fsize = frames.frame_size();
  PretrainResult result;
  result.history = run_sgd(net, total, labels, config, on_epoch,
                           [&](const FrameClassifier& n, FrameClassifier& grad, std::size_t idx, double w, double* p) {
                             const auto rec = frames.record(idx / per_record);
                             const auto frame = rec.subspan((idx % per_record) * fsize, fsize);
                             return accumulate_gradient(frame, labels[idx] != 0, n, grad, w, p);
                           });
  result.conv1 = net.conv1;
  result.conv2 = net.conv2;
  return result;
}

void transfer_time_convs(TransDopeModel& model, const PretrainResult& pretrained) {
  if (pretrained.conv1.weight.rows() != model.conv1.weight.rows() ||
      pretrained.conv1.weight.cols() != model.conv1.weight.cols() ||
      pretrained.conv2.weight.rows() != model.conv2.weight.rows() ||
      pretrained.conv2.weight.cols() != model.conv2.weight.cols()) {
    throw Error("pretrained convolution shapes do not match the model");
  }
  model.conv1 = pretrained.conv1;
  model.conv2 = pretrained.conv2;
}

double evaluate_accuracy(const TransDopeModel& model, const Dataset& dataset) {
  check_dataset(dataset, model.config, false);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if ((forward(dataset.record(i), model) >= 0.5) == dataset.label(i)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

}  // namespace mmsense::transdope
