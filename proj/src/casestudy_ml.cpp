// Copyright imkit contributors
// SPDX-License-Identifier: Apache-2.0

#include "imkit/casestudy_ml.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

namespace imkit::ml {

namespace {

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

// Softmax probabilities per row of logits, numerically shifted.
Mat softmax_rows(const Mat& logits) {
    Mat p = logits;
    for (Index i = 0; i < p.rows(); ++i) {
        const double mx = p.row(i).maxCoeff();
        p.row(i) = (p.row(i).array() - mx).exp().matrix();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

struct LogisticView {
    // w layout: classes x (in_dim + 1), row-major (weights then bias per class)
    static Mat logits(const ModelSpec& m, const Vec& w, const Mat& x) {
        Mat weight(m.classes, m.in_dim);
        Vec bias(m.classes);
        Index at = 0;
        for (int c = 0; c < m.classes; ++c) {
            for (Index j = 0; j < m.in_dim; ++j) weight(c, j) = w(at++);
            bias(c) = w(at++);
        }
        return (x * weight.transpose()).rowwise() + bias.transpose();
    }
};

struct MlpView {
    // w layout: hidden x (in_dim + 1), then classes x (hidden + 1)
    static void unpack(const ModelSpec& m, const Vec& w, Mat& w1, Vec& b1, Mat& w2, Vec& b2) {
        Index at = 0;
        w1.resize(m.hidden, m.in_dim);
        b1.resize(m.hidden);
        for (Index hd = 0; hd < m.hidden; ++hd) {
            for (Index j = 0; j < m.in_dim; ++j) w1(hd, j) = w(at++);
            b1(hd) = w(at++);
        }
        w2.resize(m.classes, m.hidden);
        b2.resize(m.classes);
        for (int c = 0; c < m.classes; ++c) {
            for (Index hd = 0; hd < m.hidden; ++hd) w2(c, hd) = w(at++);
            b2(c) = w(at++);
        }
    }
};

Mat model_logits(const ModelSpec& m, const Vec& w, const Mat& x) {
    if (m.kind == ModelKind::Logistic) return LogisticView::logits(m, w, x);
    Mat w1, w2;
    Vec b1, b2;
    MlpView::unpack(m, w, w1, b1, w2, b2);
    Mat hidden = ((x * w1.transpose()).rowwise() + b1.transpose()).array().tanh().matrix();
    return (hidden * w2.transpose()).rowwise() + b2.transpose();
}

}  // namespace

Index ModelSpec::param_count() const {
    if (kind == ModelKind::Logistic) return static_cast<Index>(classes) * (in_dim + 1);
    return hidden * (in_dim + 1) + static_cast<Index>(classes) * (hidden + 1);
}

Dataset make_blobs(Index n_records, Index dim, int classes, double spread, std::uint64_t seed) {
    if (n_records < classes || dim < 1 || classes < 2)
        throw ConfigError("make_blobs: need n >= classes >= 2 and dim >= 1");
    Rng rng(seed);
    // Class centers spread inside [0.2, 0.8]^d.
    Mat centers(classes, dim);
    for (int c = 0; c < classes; ++c)
        for (Index j = 0; j < dim; ++j) centers(c, j) = rng.uniform(0.2, 0.8);
    Dataset ds;
    ds.classes = classes;
    ds.features.resize(n_records, dim);
    ds.labels.resize(static_cast<std::size_t>(n_records));
    for (Index i = 0; i < n_records; ++i) {
        const int c = static_cast<int>(i) % classes;
        ds.labels[static_cast<std::size_t>(i)] = c;
        for (Index j = 0; j < dim; ++j) {
            // Box-Muller from two uniform draws.
            const double u1 = rng.uniform01(), u2 = rng.uniform01();
            const double gauss = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
            ds.features(i, j) = std::clamp(centers(c, j) + spread * gauss, 0.0, 1.0);
        }
    }
    return ds;
}

Dataset load_dataset_csv(const std::string& path, int classes) {
    std::ifstream is(path);
    if (!is) throw IoError("load_dataset_csv: cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (!rows.empty() && row.size() != rows.front().size())
            throw IoError("load_dataset_csv: ragged rows");
        rows.push_back(std::move(row));
    }
    if (rows.empty() || rows.front().size() < 2)
        throw IoError("load_dataset_csv: need at least one feature column plus a label");
    Dataset ds;
    ds.classes = classes;
    const Index n = static_cast<Index>(rows.size());
    const Index d = static_cast<Index>(rows.front().size()) - 1;
    ds.features.resize(n, d);
    ds.labels.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < d; ++j) ds.features(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        ds.labels[static_cast<std::size_t>(i)] =
            static_cast<int>(std::lround(rows[static_cast<std::size_t>(i)].back()));
    }
    return ds;
}

void save_dataset_csv(const Dataset& ds, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("save_dataset_csv: cannot open " + path);
    os.precision(17);
    for (Index i = 0; i < ds.size(); ++i) {
        for (Index j = 0; j < ds.feature_dim(); ++j) os << ds.features(i, j) << ",";
        os << ds.labels[static_cast<std::size_t>(i)] << "\n";
    }
}

double loss(const ModelSpec& model, const Vec& w, const Mat& x, const std::vector<int>& labels) {
    const Mat p = softmax_rows(model_logits(model, w, x));
    double total = 0.0;
    for (Index i = 0; i < x.rows(); ++i)
        total -= std::log(std::max(p(i, labels[static_cast<std::size_t>(i)]), 1e-300));
    return total / static_cast<double>(x.rows());
}

Vec gradient(const ModelSpec& model, const Vec& w, const Mat& x, const std::vector<int>& labels) {
    const Index n = x.rows();
    const double inv_n = 1.0 / static_cast<double>(n);
    if (model.kind == ModelKind::Logistic) {
        Mat p = softmax_rows(LogisticView::logits(model, w, x));
        for (Index i = 0; i < n; ++i) p(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
        const Mat gw = inv_n * (p.transpose() * x);  // classes x in_dim
        const Vec gb = inv_n * p.colwise().sum().transpose();
        Vec g(model.param_count());
        Index at = 0;
        for (int c = 0; c < model.classes; ++c) {
            for (Index j = 0; j < model.in_dim; ++j) g(at++) = gw(c, j);
            g(at++) = gb(c);
        }
        return g;
    }
    Mat w1, w2;
    Vec b1, b2;
    MlpView::unpack(model, w, w1, b1, w2, b2);
    const Mat pre = (x * w1.transpose()).rowwise() + b1.transpose();
    const Mat hidden = pre.array().tanh().matrix();
    Mat p = softmax_rows((hidden * w2.transpose()).rowwise() + b2.transpose());
    for (Index i = 0; i < n; ++i) p(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
    const Mat gw2 = inv_n * (p.transpose() * hidden);
    const Vec gb2 = inv_n * p.colwise().sum().transpose();
    const Mat dh = ((p * w2).array() * (1.0 - hidden.array().square())).matrix();
    const Mat gw1 = inv_n * (dh.transpose() * x);
    const Vec gb1 = inv_n * dh.colwise().sum().transpose();
    Vec g(model.param_count());
    Index at = 0;
    for (Index hd = 0; hd < model.hidden; ++hd) {
        for (Index j = 0; j < model.in_dim; ++j) g(at++) = gw1(hd, j);
        g(at++) = gb1(hd);
    }
    for (int c = 0; c < model.classes; ++c) {
        for (Index hd = 0; hd < model.hidden; ++hd) g(at++) = gw2(c, hd);
        g(at++) = gb2(c);
    }
    return g;
}

double accuracy(const ModelSpec& model, const Vec& w, const Mat& x,
                const std::vector<int>& labels) {
    const Mat logits = model_logits(model, w, x);
    Index correct = 0;
    for (Index i = 0; i < x.rows(); ++i) {
        Index arg = 0;
        logits.row(i).maxCoeff(&arg);
        if (static_cast<int>(arg) == labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(x.rows());
}

OptimizerState::OptimizerState(const ModelSpec& model_, const OptimizerConfig& cfg_, Vec w0)
    : model(model_), cfg(cfg_), w(std::move(w0)) {
    if (w.size() != model.param_count())
        throw DimensionError("OptimizerState: w0 size does not match the model");
    m = Vec::Zero(w.size());
    v = Vec::Zero(w.size());
}

Vec optimizer_increment(OptimizerState& state, const Minibatch& batch) {
    if (batch.x.rows() == 0) throw ConfigError("optimizer: empty minibatch");
    Vec g = gradient(state.model, state.w, batch.x, batch.labels);
    if (!g.allFinite()) throw NumericError("optimizer: non-finite gradient");
    const double norm = g.norm();
    if (norm > state.cfg.clip) g *= state.cfg.clip / norm;
    ++state.t;
    if (state.cfg.kind == OptimizerKind::Sgd) return state.cfg.eta * g;
    state.m = state.cfg.beta1 * state.m + (1.0 - state.cfg.beta1) * g;
    state.v = state.cfg.beta2 * state.v + (1.0 - state.cfg.beta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(state.cfg.beta1, state.t);
    const double c2 = 1.0 - std::pow(state.cfg.beta2, state.t);
    return ((state.cfg.alpha / c1) * state.m.array() / ((state.v.array() / c2).sqrt() + state.cfg.eps_adam))
        .matrix();
}

void sgd_step(OptimizerState& state, const Minibatch& batch) {
    state.w -= optimizer_increment(state, batch);
}

void adam_step(OptimizerState& state, const Minibatch& batch) {
    state.w -= optimizer_increment(state, batch);
}

MinibatchSchedule::MinibatchSchedule(Index n_records, Index batch, std::uint64_t seed)
    : n_(n_records), batch_(std::min(batch, n_records)), rng_(seed),
      checksum_(1469598103934665603ull) {
    if (n_records < 1 || batch < 1) throw ConfigError("schedule: need records and batch >= 1");
}

std::vector<Index> MinibatchSchedule::next() {
    std::vector<Index> idx(static_cast<std::size_t>(batch_));
    for (auto& i : idx) {
        i = static_cast<Index>(rng_.next_u64() % static_cast<std::uint64_t>(n_));
        checksum_ ^= static_cast<std::uint64_t>(i) + 0x9e3779b97f4a7c15ull;
        checksum_ *= 1099511628211ull;  // FNV-style mix
    }
    return idx;
}

EncodedDataset encode_dataset(const EncodingScheme& scheme, const Dataset& ds, Rng& rng) {
    if (scheme.dims().ny != ds.record_dim())
        throw DimensionError("encode_dataset: scheme ny must equal feature_dim + 1 (label)");
    EncodedDataset enc;
    enc.ytilde.resize(ds.size(), scheme.dims().ny_lift);
    Vec rec(ds.record_dim());
    for (Index i = 0; i < ds.size(); ++i) {
        rec.head(ds.feature_dim()) = ds.features.row(i).transpose();
        rec(ds.feature_dim()) = static_cast<double>(ds.labels[static_cast<std::size_t>(i)]);
        enc.ytilde.row(i) = scheme.encode_input(rec, static_cast<std::uint64_t>(i), rng)
                                .ytilde.transpose();
    }
    return enc;
}

Dataset decode_dataset_in_cloud(const EncodingScheme& scheme, const EncodedDataset& enc,
                                int classes) {
    Dataset ds;
    ds.classes = classes;
    const Index n = enc.ytilde.rows();
    const Index d = scheme.dims().ny - 1;
    ds.features.resize(n, d);
    ds.labels.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const Vec rec = linalg::accurate_product(scheme.pi1_left(), enc.ytilde.row(i).transpose());
        ds.features.row(i) = rec.head(d).transpose();
        ds.labels[static_cast<std::size_t>(i)] =
            std::clamp(static_cast<int>(std::lround(rec(d))), 0, classes - 1);
    }
    return ds;
}

TrainResult train_reference(const ModelSpec& model, const Dataset& ds,
                            const OptimizerConfig& cfg) {
    const double t0 = now_seconds();
    Rng init(cfg.init_seed);
    Vec w0(model.param_count());
    for (Index i = 0; i < w0.size(); ++i) w0(i) = init.uniform(-0.5, 0.5);

    OptimizerState state(model, cfg, w0);
    MinibatchSchedule schedule(ds.size(), cfg.batch, cfg.schedule_seed);
    TrainResult res;
    for (int t = 0; t < cfg.epochs; ++t) {
        const auto idx = schedule.next();
        Minibatch batch;
        batch.x.resize(static_cast<Index>(idx.size()), ds.feature_dim());
        batch.labels.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            batch.x.row(static_cast<Index>(i)) = ds.features.row(idx[i]);
            batch.labels[i] = ds.labels[static_cast<std::size_t>(idx[i])];
        }
        state.w -= optimizer_increment(state, batch);
        res.epoch_accuracy.push_back(accuracy(model, state.w, ds.features, ds.labels));
    }
    res.w = state.w;
    res.schedule_checksum = schedule.checksum();
    res.seconds = now_seconds() - t0;
    return res;
}

TargetTrainResult target_optimize(const ModelSpec& model, const EncodingScheme& scheme,
                                  const EncodedDataset& enc, const OptimizerConfig& cfg) {
    if (scheme.dims().nzeta != model.param_count() || scheme.dims().nu != model.param_count())
        throw DimensionError("target_optimize: scheme nzeta and nu must equal param_count");
    if (enc.ytilde.rows() < 1) throw ConfigError("target_optimize: empty encoded dataset");

    const double t0 = now_seconds();
    // Cloud-side decode of the database (Pi1^L per record).
    const Dataset dbar = decode_dataset_in_cloud(scheme, enc, model.classes);

    Rng init(cfg.init_seed);
    Vec w0(model.param_count());
    for (Index i = 0; i < w0.size(); ++i) w0(i) = init.uniform(-0.5, 0.5);

    OptimizerState state(model, cfg, w0);
    Vec w_tilde = scheme.pi2() * w0;  // start on the manifold
    MinibatchSchedule schedule(dbar.size(), cfg.batch, cfg.schedule_seed);

    TargetTrainResult res;
    for (int t = 0; t < cfg.epochs; ++t) {
        const auto idx = schedule.next();
        Minibatch batch;
        batch.x.resize(static_cast<Index>(idx.size()), dbar.feature_dim());
        batch.labels.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            batch.x.row(static_cast<Index>(i)) = dbar.features.row(idx[i]);
            batch.labels[i] = dbar.labels[static_cast<std::size_t>(idx[i])];
        }
        state.w = linalg::accurate_product(scheme.pi2_left(), w_tilde);
        const Vec p = optimizer_increment(state, batch);
        w_tilde -= scheme.pi2() * p;
        res.epoch_accuracy.push_back(accuracy(
            model, linalg::accurate_product(scheme.pi2_left(), w_tilde), dbar.features, dbar.labels));
    }
    res.w_tilde = linalg::accurate_product_sum(
        scheme.pi3(), linalg::accurate_product(scheme.pi2_left(), w_tilde), scheme.pi4(),
        enc.ytilde.row(0).transpose());
    res.ytilde0 = enc.ytilde.row(0).transpose();
    res.schedule_checksum = schedule.checksum();
    res.seconds = now_seconds() - t0;
    return res;
}

Vec decode_model(const EncodingScheme& scheme, const Vec& w_tilde, const Vec& ytilde0) {
    if (ytilde0.size() != scheme.dims().ny_lift)
        throw DimensionError("decode_model: ytilde0 dimension mismatch");
    if (w_tilde.size() != scheme.dims().nu_lift)
        throw DimensionError("decode_model: w_tilde dimension mismatch");
    return linalg::accurate_product(
        scheme.pi3_left(), linalg::accurate_offset_difference(w_tilde, scheme.pi4(), ytilde0));
}

TwoScaleAlgorithm optimizer_two_scale(const ModelSpec& model, const Dataset& ds,
                                      const OptimizerConfig& cfg) {
    // The whole database is bound into the closure; the y input slot is a
    // placeholder of dimension record_dim (one record) so the algorithm fits
    // the generic machinery for tests.
    auto state = std::make_shared<OptimizerState>(model, cfg, Vec::Zero(model.param_count()));
    auto schedule = std::make_shared<MinibatchSchedule>(ds.size(), cfg.batch, cfg.schedule_seed);
    auto data = std::make_shared<Dataset>(ds);

    TwoScaleAlgorithm alg;
    alg.local_steps = cfg.epochs;
    alg.base.dims = {model.param_count(), ds.record_dim(), model.param_count(), 0};
    Rng init(cfg.init_seed);
    alg.base.zeta0 = Vec(model.param_count());
    for (Index i = 0; i < alg.base.zeta0.size(); ++i) alg.base.zeta0(i) = init.uniform(-0.5, 0.5);
    alg.base.f = [state, schedule, data](const Vec& zeta, const Vec&, const Vec&) {
        const auto idx = schedule->next();
        Minibatch batch;
        batch.x.resize(static_cast<Index>(idx.size()), data->feature_dim());
        batch.labels.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            batch.x.row(static_cast<Index>(i)) = data->features.row(idx[i]);
            batch.labels[i] = data->labels[static_cast<std::size_t>(idx[i])];
        }
        state->w = zeta;
        return Vec(zeta - optimizer_increment(*state, batch));
    };
    alg.base.g = [](const Vec& zeta, const Vec&, const Vec&) { return zeta; };
    return alg;
}

BenchmarkResult benchmark(const ModelSpec& model, const Dataset& ds, const OptimizerConfig& cfg,
                          const EncodingScheme& scheme, std::uint64_t encode_seed,
                          const std::string& csv_path) {
    BenchmarkResult out;
    const TrainResult plain = train_reference(model, ds, cfg);

    Rng enc_rng(encode_seed);
    const double t0 = now_seconds();
    const EncodedDataset enc = encode_dataset(scheme, ds, enc_rng);
    TargetTrainResult target = target_optimize(model, scheme, enc, cfg);
    const Vec decoded = decode_model(scheme, target.w_tilde, target.ytilde0);
    const double siml_total = now_seconds() - t0;

    if (plain.schedule_checksum != target.schedule_checksum)
        throw NumericError("benchmark: minibatch schedules diverged between runs");

    out.plain_acc = plain.epoch_accuracy;
    out.siml_acc = target.epoch_accuracy;
    out.plain_seconds = plain.seconds;
    out.siml_seconds = siml_total;
    out.param_gap_linf = (decoded - plain.w).cwiseAbs().maxCoeff();

    if (!csv_path.empty()) {
        std::ofstream os(csv_path);
        if (!os) throw IoError("benchmark: cannot open " + csv_path);
        os << "epoch,plain_acc,siml_acc,plain_time_s,siml_time_s\n";
        os.precision(17);
        for (std::size_t t = 0; t < out.plain_acc.size(); ++t) {
            os << t << "," << out.plain_acc[t] << "," << out.siml_acc[t] << ","
               << out.plain_seconds << "," << out.siml_seconds << "\n";
        }
    }
    return out;
}

}  // namespace imkit::ml
