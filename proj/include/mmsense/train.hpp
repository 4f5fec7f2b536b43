#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mmsense/dataset.hpp"
#include "mmsense/transdope.hpp"

namespace mmsense::transdope {

struct TrainConfig {
  int epochs = 50;
  int batch = 8;
  double lr0 = 1e-2;
  int decay_every = 10;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Inverse step decay: lr0 / (1 + floor(epoch / decay_every)).
double learning_rate(const TrainConfig& config, int epoch);

struct EpochRecord {
  int epoch = 0;
  double learning_rate = 0.0;
  double loss = 0.0;      // mean minibatch loss over the epoch
  double accuracy = 0.0;  // running training accuracy over the epoch
};

using TrainHistory = std::vector<EpochRecord>;
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Plain minibatch SGD on mean BCE. Records are visited in a fresh seeded
/// permutation every epoch. Throws Error (with epoch/batch context) as soon
/// as a loss turns non-finite.
TrainHistory train(TransDopeModel& model, const Dataset& dataset, const TrainConfig& config,
                   const EpochCallback& on_epoch = {});

struct PretrainResult {
  Conv2d conv1, conv2;
  TrainHistory history;
};

/// Trains a per-frame classifier (the two time convolutions, a flatten and a
/// linear head) on every frame of `frames`, each frame inheriting its
/// record's label, and returns the convolution weights.
PretrainResult pretrain_time_convs(const Dataset& frames, const TransDopeConfig& model_config,
                                   const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Copies pretrained convolution weights into `model`.
void transfer_time_convs(TransDopeModel& model, const PretrainResult& pretrained);

/// Fraction of records whose thresholded probability (>= 0.5) equals the label.
double evaluate_accuracy(const TransDopeModel& model, const Dataset& dataset);

}  // namespace mmsense::transdope
