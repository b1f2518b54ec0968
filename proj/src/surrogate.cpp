#include "kmor/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

namespace kmor {

Vector ParamVector::as_vector() const {
    Vector v(static_cast<Index>(kNumParams));
    v << a_cs, t_r_cs, a_pf, t_r_pf, t_fin;
    return v;
}

ParamVector ParamVector::from_vector(const Vector& v) {
    if (v.size() != static_cast<Index>(kNumParams)) {
        throw ShapeError("ParamVector: expected 5 components");
    }
    return {v(0), v(1), v(2), v(3), v(4)};
}

ParamRanges ParamRanges::defaults() {
    ParamRanges r;
    r.r[0] = {0.01 * kNominalCsAmplitude, 2.0 * kNominalCsAmplitude};
    r.r[1] = {0.01 * kNominalRiseTime, 2.0 * kNominalRiseTime};
    r.r[2] = {0.01 * kNominalPfAmplitude, 2.0 * kNominalPfAmplitude};
    r.r[3] = {0.01 * kNominalRiseTime, 2.0 * kNominalRiseTime};
    r.r[4] = {0.7, 1.0};
    return r;
}

void ParamRanges::validate() const {
    for (std::size_t i = 0; i < kNumParams; ++i) {
        if (!(std::isfinite(r[i].lo) && std::isfinite(r[i].hi) && r[i].lo > 0.0 && r[i].lo <= r[i].hi)) {
            throw ConfigError("parameter range " + std::to_string(i) + " must satisfy 0 < lo <= hi");
        }
    }
    // Rise times must fit inside every admissible t_fin.
    if (r[1].hi > r[4].lo || r[3].hi > r[4].lo) {
        throw ConfigError("rise-time ranges must not exceed the smallest t_fin");
    }
}

bool ParamRanges::contains(const ParamVector& p) const {
    const Vector v = p.as_vector();
    for (std::size_t i = 0; i < kNumParams; ++i) {
        if (v(static_cast<Index>(i)) < r[i].lo || v(static_cast<Index>(i)) > r[i].hi) return false;
    }
    return true;
}

std::vector<ParamVector> sample_parameters(const ParamRanges& ranges, int n_s, std::uint64_t seed) {
    ranges.validate();
    if (n_s < 1) throw ConfigError("sample_parameters: N_s must be at least 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<ParamVector> out;
    out.reserve(static_cast<std::size_t>(n_s));
    for (int s = 0; s < n_s; ++s) {
        Vector v(static_cast<Index>(kNumParams));
        for (std::size_t i = 0; i < kNumParams; ++i) {
            v(static_cast<Index>(i)) = ranges.r[i].lo + (ranges.r[i].hi - ranges.r[i].lo) * u(rng);
        }
        out.push_back(ParamVector::from_vector(v));
    }
    return out;
}

Matrix simulate_controls(const SurrogateProblem& prob, const ParamVector& mu) {
    const Index n_own = static_cast<Index>(std::llround(mu.t_fin / prob.grid.dt)) + 1;
    if (n_own > prob.grid.n_t || n_own < 2) {
        throw DomainError("simulate_controls: t_fin = " + std::to_string(mu.t_fin) +
                          " does not fit the common grid");
    }
    TimeGrid own = prob.grid;
    own.n_t = n_own;
    const Waveform cs = Waveform::ramp_plateau(mu.a_cs, mu.t_r_cs, mu.t_fin);
    const Waveform pf = Waveform::ramp_plateau(mu.a_pf, mu.t_r_pf, mu.t_fin);
    Matrix y = Matrix::Zero(prob.ops.n_prescribed(), n_own);
    for (Index n = 0; n < n_own; ++n) {
        const double t = std::min(own.t(n), mu.t_fin);
        y(prob.cs_row, n) = cs.eval(t);
        y(prob.pf_row, n) = pf.eval(t);
    }
    const ControlResult res = solve_nullfield(prob.ops, y, own, prob.method);
    Matrix x(res.x.rows(), prob.grid.n_t);
    x.leftCols(n_own) = res.x;
    for (Index n = n_own; n < prob.grid.n_t; ++n) x.col(n) = res.x.col(n_own - 1);
    return x;
}

Matrix generate_dataset(const SurrogateProblem& prob, const std::vector<ParamVector>& params) {
    const Index n_t = prob.grid.n_t;
    const Index m = prob.ops.n_controls();
    Matrix x(m * n_t, static_cast<Index>(params.size()));
    for (std::size_t s = 0; s < params.size(); ++s) {
        Matrix xs;
        try {
            xs = simulate_controls(prob, params[s]);
        } catch (const Error& e) {
            const Vector v = params[s].as_vector();
            std::string mu = "[";
            for (Index i = 0; i < v.size(); ++i) mu += (i ? ", " : "") + format_shortest(v(i));
            throw Error("dataset sample " + std::to_string(s) + " mu = " + mu + "]: " + e.what());
        }
        // Row-major flattening: all samples of X_1, then X_2, ...
        for (Index c = 0; c < m; ++c) {
            x.col(static_cast<Index>(s)).segment(c * n_t, n_t) = xs.row(c).transpose();
        }
    }
    return x;
}

Matrix params_matrix(const std::vector<ParamVector>& params) {
    Matrix p(static_cast<Index>(kNumParams), static_cast<Index>(params.size()));
    for (std::size_t s = 0; s < params.size(); ++s) p.col(static_cast<Index>(s)) = params[s].as_vector();
    return p;
}

const char* pod_method_name(PodMethod m) { return m == PodMethod::cpqr ? "cpqr" : "svd"; }

PodMethod parse_pod_method(const std::string& s) {
    if (s == "svd") return PodMethod::svd;
    if (s == "cpqr") return PodMethod::cpqr;
    throw ConfigError("unknown POD method '" + s + "'");
}

Vector PodBasis::project(const Vector& x) const { return modes.transpose() * (x - mean); }

Vector PodBasis::reconstruct(const Vector& a) const { return mean + modes * a; }

PodBasis build_pod(const Matrix& x, int n_pod, PodMethod method) {
    if (n_pod < 1 || n_pod > std::min(x.rows(), x.cols())) {
        throw ConfigError("build_pod: N_POD = " + std::to_string(n_pod) + " exceeds min(rows, samples) = " +
                          std::to_string(std::min(x.rows(), x.cols())));
    }
    PodBasis pod;
    pod.method = method;
    pod.mean = x.rowwise().mean();
    const Matrix centered = x.colwise() - pod.mean;
    if (method == PodMethod::svd) {
        const Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinU);
        pod.modes = svd.matrixU().leftCols(n_pod);
        pod.sigma = svd.singularValues().head(n_pod);
    } else {
        const Eigen::ColPivHouseholderQR<Matrix> qr(centered);
        pod.modes = qr.householderQ() * Matrix::Identity(x.rows(), n_pod);
        pod.sigma = qr.matrixR().diagonal().head(n_pod).cwiseAbs();
    }
    pod.coeffs = pod.modes.transpose() * centered;
    return pod;
}

namespace {

constexpr double kMinStd = 1e-12;

void standardize_stats(const Matrix& data, Vector& mean, Vector& std) {
    mean = data.rowwise().mean();
    std.resize(data.rows());
    for (Index i = 0; i < data.rows(); ++i) {
        const double var = (data.row(i).array() - mean(i)).square().mean();
        const double s = std::sqrt(var);
        // A constant component keeps unit scale so normalization stays invertible.
        std(i) = s > kMinStd * std::max(1.0, std::abs(mean(i))) ? s : 1.0;
    }
}

Matrix normalize(const Matrix& data, const Vector& mean, const Vector& std) {
    return (data.colwise() - mean).array().colwise() / std.array();
}

struct AdamState {
    std::vector<Matrix> mw, vw;
    std::vector<Vector> mb, vb;
};

}  // namespace

Matrix NNModel::forward_normalized(const Matrix& xn) const {
    Matrix h = xn;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Matrix z = layers[l].w * h;
        z.colwise() += layers[l].b;
        h = l + 1 < layers.size() ? Matrix(z.array().tanh()) : z;
    }
    return h;
}

Vector NNModel::predict(const Vector& mu) const {
    if (mu.size() != n_inputs()) throw ShapeError("NNModel::predict: wrong input size");
    const Vector xn = ((mu - in_mean).array() / in_std.array()).matrix();
    const Vector yn = forward_normalized(xn);
    return (yn.array() * out_std.array()).matrix() + out_mean;
}

NNModel train_nn(const Matrix& targets, const Matrix& inputs, const TrainConfig& cfg) {
    if (targets.cols() != inputs.cols()) {
        throw ShapeError("train_nn: targets and inputs have different sample counts");
    }
    if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0) || cfg.hidden.empty() ||
        !(cfg.validation_fraction >= 0.0 && cfg.validation_fraction < 1.0)) {
        throw ConfigError("train_nn: invalid hyperparameters");
    }
    const Index n_s = inputs.cols();
    std::mt19937_64 rng(cfg.seed);

    std::vector<Index> order(static_cast<std::size_t>(n_s));
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_val = static_cast<Index>(std::floor(cfg.validation_fraction * static_cast<double>(n_s)));
    const Index n_train = n_s - n_val;
    if (n_train < 1) throw ConfigError("train_nn: no training samples after the validation split");
    const std::vector<Index> train_idx(order.begin(), order.begin() + n_train);
    const std::vector<Index> val_idx(order.begin() + n_train, order.end());

    NNModel nn;
    const Matrix x_train = inputs(Eigen::all, train_idx);
    const Matrix y_train = targets(Eigen::all, train_idx);
    standardize_stats(x_train, nn.in_mean, nn.in_std);
    standardize_stats(y_train, nn.out_mean, nn.out_std);
    const Matrix xn = normalize(x_train, nn.in_mean, nn.in_std);
    const Matrix yn = normalize(y_train, nn.out_mean, nn.out_std);

    std::vector<int> widths;
    widths.push_back(static_cast<int>(inputs.rows()));
    widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    widths.push_back(static_cast<int>(targets.rows()));
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const int fan_in = widths[l];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        NNLayer layer;
        layer.w.resize(widths[l + 1], fan_in);
        layer.b.resize(widths[l + 1]);
        for (Index i = 0; i < layer.w.size(); ++i) layer.w.data()[i] = u(rng);
        for (Index i = 0; i < layer.b.size(); ++i) layer.b(i) = u(rng);
        nn.layers.push_back(std::move(layer));
    }
    const std::size_t n_layers = nn.layers.size();

    AdamState adam;
    for (const auto& layer : nn.layers) {
        adam.mw.push_back(Matrix::Zero(layer.w.rows(), layer.w.cols()));
        adam.vw.push_back(Matrix::Zero(layer.w.rows(), layer.w.cols()));
        adam.mb.push_back(Vector::Zero(layer.b.size()));
        adam.vb.push_back(Vector::Zero(layer.b.size()));
    }

    std::vector<Index> perm(static_cast<std::size_t>(n_train));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::vector<Matrix> acts(n_layers + 1);
    std::vector<Matrix> gw(n_layers);
    std::vector<Vector> gb(n_layers);
    long step = 0;
    nn.loss_history.reserve(static_cast<std::size_t>(cfg.epochs));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(perm.begin(), perm.end(), rng);
        double epoch_loss = 0.0;
        for (Index start = 0; start < n_train; start += cfg.batch_size) {
            const Index bs = std::min<Index>(cfg.batch_size, n_train - start);
            const std::vector<Index> idx(perm.begin() + start, perm.begin() + start + bs);
            acts[0] = xn(Eigen::all, idx);
            for (std::size_t l = 0; l < n_layers; ++l) {
                Matrix z = nn.layers[l].w * acts[l];
                z.colwise() += nn.layers[l].b;
                acts[l + 1] = l + 1 < n_layers ? Matrix(z.array().tanh()) : z;
            }
            const Matrix diff = acts[n_layers] - yn(Eigen::all, idx);
            const double count = static_cast<double>(diff.size());
            epoch_loss += diff.squaredNorm();
            // d(mean squared error)/d(output)
            Matrix delta = (2.0 / count) * diff;
            for (std::size_t l = n_layers; l-- > 0;) {
                gw[l] = delta * acts[l].transpose();
                gb[l] = delta.rowwise().sum();
                if (l > 0) {
                    delta = (nn.layers[l].w.transpose() * delta).array() * (1.0 - acts[l].array().square());
                }
            }
            ++step;
            const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            for (std::size_t l = 0; l < n_layers; ++l) {
                adam.mw[l] = cfg.beta1 * adam.mw[l] + (1.0 - cfg.beta1) * gw[l];
                adam.vw[l] = cfg.beta2 * adam.vw[l] + (1.0 - cfg.beta2) * gw[l].cwiseAbs2();
                adam.mb[l] = cfg.beta1 * adam.mb[l] + (1.0 - cfg.beta1) * gb[l];
                adam.vb[l] = cfg.beta2 * adam.vb[l] + (1.0 - cfg.beta2) * gb[l].cwiseAbs2();
                nn.layers[l].w.array() -= cfg.learning_rate * (adam.mw[l].array() / c1) /
                                          ((adam.vw[l].array() / c2).sqrt() + cfg.adam_eps);
                nn.layers[l].b.array() -= cfg.learning_rate * (adam.mb[l].array() / c1) /
                                          ((adam.vb[l].array() / c2).sqrt() + cfg.adam_eps);
            }
        }
        const double mse = epoch_loss / static_cast<double>(yn.size());
        if (!std::isfinite(mse)) {
            throw TrainingError("train_nn: loss became non-finite at epoch " + std::to_string(epoch) +
                                " (learning rate " + format_shortest(cfg.learning_rate) + ")");
        }
        nn.loss_history.push_back(mse);
    }
    nn.train_mse = (nn.forward_normalized(xn) - yn).squaredNorm() / static_cast<double>(yn.size());
    if (!val_idx.empty()) {
        const Matrix xv = normalize(inputs(Eigen::all, val_idx), nn.in_mean, nn.in_std);
        const Matrix yv = normalize(targets(Eigen::all, val_idx), nn.out_mean, nn.out_std);
        nn.validation_mse = (nn.forward_normalized(xv) - yv).squaredNorm() / static_cast<double>(yv.size());
    }
    return nn;
}

Matrix predict_reconstruct(const NNModel& nn, const PodBasis& pod, const ParamVector& mu, Index n_series) {
    if (nn.n_outputs() != pod.n_pod()) throw ShapeError("predict_reconstruct: network and POD sizes differ");
    const Vector x = pod.reconstruct(nn.predict(mu.as_vector()));
    if (n_series < 1 || x.size() % n_series != 0) throw ShapeError("predict_reconstruct: bad series count");
    const Index n_t = x.size() / n_series;
    Matrix out(n_series, n_t);
    for (Index c = 0; c < n_series; ++c) out.row(c) = x.segment(c * n_t, n_t).transpose();
    return out;
}

Vector per_series_relative_error(const Matrix& pred, const Matrix& ref) {
    if (pred.rows() != ref.rows() || pred.cols() != ref.cols()) {
        throw ShapeError("per_series_relative_error: shape mismatch");
    }
    Vector e(ref.rows());
    for (Index c = 0; c < ref.rows(); ++c) {
        const double num = (pred.row(c) - ref.row(c)).norm();
        const double den = ref.row(c).norm();
        e(c) = den == 0.0 ? (num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity()) : num / den;
    }
    return e;
}

nlohmann::json NNModel::to_json() const {
    auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    nlohmann::json j;
    j["format"] = "kmor-nn-1";
    j["activation"] = "tanh";
    nlohmann::json ls = nlohmann::json::array();
    for (const auto& l : layers) {
        // Row-major weights: w[i * in + k].
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(l.w.size()));
        for (Index i = 0; i < l.w.rows(); ++i)
            for (Index k = 0; k < l.w.cols(); ++k) w.push_back(l.w(i, k));
        ls.push_back({{"in", l.w.cols()}, {"out", l.w.rows()}, {"w", w}, {"b", vec(l.b)}});
    }
    j["layers"] = ls;
    j["in_mean"] = vec(in_mean);
    j["in_std"] = vec(in_std);
    j["out_mean"] = vec(out_mean);
    j["out_std"] = vec(out_std);
    j["train_mse"] = train_mse;
    j["validation_mse"] = validation_mse;
    j["loss_history"] = loss_history;
    return j;
}

NNModel NNModel::from_json(const nlohmann::json& j) {
    auto vec = [](const nlohmann::json& a) {
        const auto v = a.get<std::vector<double>>();
        return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())));
    };
    try {
        if (j.at("format").get<std::string>() != "kmor-nn-1") throw IoError("unsupported network format");
        NNModel nn;
        for (const auto& l : j.at("layers")) {
            const Index in = l.at("in").get<Index>();
            const Index out = l.at("out").get<Index>();
            const auto w = l.at("w").get<std::vector<double>>();
            if (static_cast<Index>(w.size()) != in * out) throw IoError("layer weight count mismatch");
            NNLayer layer;
            layer.w.resize(out, in);
            for (Index i = 0; i < out; ++i)
                for (Index k = 0; k < in; ++k) layer.w(i, k) = w[static_cast<std::size_t>(i * in + k)];
            layer.b = vec(l.at("b"));
            nn.layers.push_back(std::move(layer));
        }
        nn.in_mean = vec(j.at("in_mean"));
        nn.in_std = vec(j.at("in_std"));
        nn.out_mean = vec(j.at("out_mean"));
        nn.out_std = vec(j.at("out_std"));
        nn.train_mse = j.at("train_mse").get<double>();
        nn.validation_mse = j.at("validation_mse").get<double>();
        nn.loss_history = j.at("loss_history").get<std::vector<double>>();
        if (nn.layers.empty()) throw IoError("network has no layers");
        return nn;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("corrupt network JSON: ") + e.what());
    }
}

void save_pod(const std::filesystem::path& dir, const PodBasis& pod) {
    std::filesystem::create_directories(dir);
    write_morb(dir / "mean.morb", pod.mean);
    write_morb(dir / "modes.morb", pod.modes);
    write_morb(dir / "sigma.morb", pod.sigma);
    write_morb(dir / "coeffs.morb", pod.coeffs);
    std::ofstream os(dir / "pod.json");
    if (!os) throw IoError("cannot write " + (dir / "pod.json").string());
    os << nlohmann::json{{"method", pod_method_name(pod.method)}, {"n_pod", pod.n_pod()}}.dump(2) << '\n';
}

PodBasis load_pod(const std::filesystem::path& dir) {
    std::ifstream is(dir / "pod.json");
    if (!is) throw IoError("missing POD manifest in " + dir.string());
    PodBasis pod;
    try {
        pod.method = parse_pod_method(nlohmann::json::parse(is).at("method").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("corrupt POD manifest: ") + e.what());
    }
    pod.mean = read_morb(dir / "mean.morb");
    pod.modes = read_morb(dir / "modes.morb");
    pod.sigma = read_morb(dir / "sigma.morb");
    pod.coeffs = read_morb(dir / "coeffs.morb");
    return pod;
}

nlohmann::json params_to_json(const std::vector<ParamVector>& params) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& p : params) {
        rows.push_back({{"a_cs", p.a_cs}, {"t_r_cs", p.t_r_cs}, {"a_pf", p.a_pf}, {"t_r_pf", p.t_r_pf},
                        {"t_fin", p.t_fin}});
    }
    return rows;
}

std::vector<ParamVector> params_from_json(const nlohmann::json& j) {
    std::vector<ParamVector> out;
    try {
        for (const auto& r : j) {
            out.push_back({r.at("a_cs").get<double>(), r.at("t_r_cs").get<double>(), r.at("a_pf").get<double>(),
                           r.at("t_r_pf").get<double>(), r.at("t_fin").get<double>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("corrupt parameter rows: ") + e.what());
    }
    return out;
}

}  // namespace kmor
