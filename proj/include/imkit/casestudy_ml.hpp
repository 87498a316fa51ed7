// Copyright imkit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "imkit/algorithm.hpp"

namespace imkit::ml {

// Records with features normalized to [0,1] (so the input sensitivity is 1)
// and small integer labels.
struct Dataset {
    Mat features;             // n_records x feature_dim
    std::vector<int> labels;  // values in [0, classes)
    int classes = 2;

    Index size() const { return features.rows(); }
    Index feature_dim() const { return features.cols(); }
    // Encoded-record dimension: features with the label appended.
    Index record_dim() const { return features.cols() + 1; }
};

// Gaussian blobs, one per class, clipped to [0,1]^d.
Dataset make_blobs(Index n_records, Index dim, int classes, double spread, std::uint64_t seed);

Dataset load_dataset_csv(const std::string& path, int classes);
void save_dataset_csv(const Dataset& ds, const std::string& path);

enum class ModelKind { Logistic, Mlp };

// Softmax classifiers with cross-entropy loss: plain multinomial logistic
// regression, or one tanh hidden layer ("2-layer" = hidden + output).
struct ModelSpec {
    ModelKind kind = ModelKind::Logistic;
    Index in_dim = 2;
    int classes = 2;
    Index hidden = 8;  // MLP only

    Index param_count() const;
};

double loss(const ModelSpec& model, const Vec& w, const Mat& x, const std::vector<int>& labels);
Vec gradient(const ModelSpec& model, const Vec& w, const Mat& x, const std::vector<int>& labels);
double accuracy(const ModelSpec& model, const Vec& w, const Mat& x, const std::vector<int>& labels);

enum class OptimizerKind { Sgd, Adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Sgd;
    double eta = 0.001;    // SGD learning rate
    double alpha = 0.001;  // Adam step size
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    double clip = 1000.0;  // global l2 gradient clipping threshold C
    int epochs = 50;       // T
    Index batch = 32;
    std::uint64_t schedule_seed = 1;
    std::uint64_t init_seed = 2;
};

struct Minibatch {
    Mat x;
    std::vector<int> labels;
};

// Optimizer state: parameters plus the Adam moment accumulators. The update
// count t is 1-based in the bias corrections (the first update divides by
// 1 - beta^1).
struct OptimizerState {
    ModelSpec model;
    OptimizerConfig cfg;
    Vec w;
    Vec m, v;  // Adam moments
    int t = 0;

    OptimizerState(const ModelSpec& model_, const OptimizerConfig& cfg_, Vec w0);
};

// The gradient-based increment p(w_t, Y_t) of the chosen optimizer, with the
// gradient clipped to l2 norm <= C first. Advances the moment accumulators
// but not w (the caller applies w <- w - p, plain or immersed).
Vec optimizer_increment(OptimizerState& state, const Minibatch& batch);

// w <- w - p(w, batch).
void sgd_step(OptimizerState& state, const Minibatch& batch);
void adam_step(OptimizerState& state, const Minibatch& batch);

// Deterministic minibatch index schedule shared by the plain and target
// runs; the checksum detects schedule mismatches between them.
class MinibatchSchedule {
  public:
    MinibatchSchedule(Index n_records, Index batch, std::uint64_t seed);
    std::vector<Index> next();
    std::uint64_t checksum() const { return checksum_; }

  private:
    Index n_, batch_;
    Rng rng_;
    std::uint64_t checksum_;
};

struct EncodedDataset {
    Mat ytilde;  // n_records x ny_lift; row i encodes [features_i, label_i]
};

// Per-record encoding ytilde_i = Pi1 [y_i; label_i] + N1 s_i with fresh noise
// per record. Scheme ny must equal record_dim().
EncodedDataset encode_dataset(const EncodingScheme& scheme, const Dataset& ds, Rng& rng);

// Record i decoded cloud-side: Pi1^L ytilde_i, split back into features and
// label (label rounded to the nearest class index).
Dataset decode_dataset_in_cloud(const EncodingScheme& scheme, const EncodedDataset& enc,
                                int classes);

struct TrainResult {
    Vec w;
    std::vector<double> epoch_accuracy;
    std::uint64_t schedule_checksum = 0;
    double seconds = 0.0;
};

struct TargetTrainResult {
    Vec w_tilde;  // encoded final parameters
    Vec ytilde0;  // encoded record 0, the utility offset
    std::vector<double> epoch_accuracy;
    std::uint64_t schedule_checksum = 0;
    double seconds = 0.0;
};

// Plain optimizer loop (the reference run).
TrainResult train_reference(const ModelSpec& model, const Dataset& ds,
                            const OptimizerConfig& cfg);

// The immersed optimizer: T local steps on the decoded-in-cloud database,
//   wtilde_{t+1} = wtilde_t - Pi2 p(Pi2^L wtilde_t, D_bar),
// emitting wtilde* = Pi3 Pi2^L wtilde_T + Pi4 ytilde_0. Scheme dims must
// satisfy nzeta = nu = param_count and ny = record_dim.
TargetTrainResult target_optimize(const ModelSpec& model, const EncodingScheme& scheme,
                                  const EncodedDataset& enc, const OptimizerConfig& cfg);

// w* = Pi3^L (wtilde* - Pi4 ytilde_0).
Vec decode_model(const EncodingScheme& scheme, const Vec& w_tilde, const Vec& ytilde0);

// The optimizer as a two-time-scale dynamic algorithm over a fixed database
// (y input unused; the batch schedule and data live in the closure).
TwoScaleAlgorithm optimizer_two_scale(const ModelSpec& model, const Dataset& ds,
                                      const OptimizerConfig& cfg);

struct BenchmarkResult {
    std::vector<double> plain_acc, siml_acc;
    double plain_seconds = 0.0, siml_seconds = 0.0;
    double param_gap_linf = 0.0;  // decoded SIML vs plain parameters
};

// Plain vs SIML training under a shared schedule; writes the metrics CSV
// (epoch, plain_acc, siml_acc, plain_time_s, siml_time_s) when a path is
// given.
BenchmarkResult benchmark(const ModelSpec& model, const Dataset& ds, const OptimizerConfig& cfg,
                          const EncodingScheme& scheme, std::uint64_t encode_seed,
                          const std::string& csv_path);

}  // namespace imkit::ml
