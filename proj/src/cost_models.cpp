#include "cost_models.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "errors.hpp"
#include "io_util.hpp"

namespace exdiff {

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

Eigen::MatrixXd normal_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = g(rng);
  return m;
}

void check_agent(const CostModel& m, std::size_t k, const Eigen::VectorXd& w) {
  if (k >= m.n_agents()) fail(ErrorKind::configuration, "agent index " + std::to_string(k) + " out of range");
  if (static_cast<std::size_t>(w.size()) != m.dim())
    fail(ErrorKind::configuration, "point has dimension " + std::to_string(w.size()) + ", model expects " + std::to_string(m.dim()));
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::least_squares: return "least_squares";
    case ModelKind::logistic: return "logistic";
    case ModelKind::mse_quadratic: return "mse_quadratic";
  }
  return "unknown";
}

CostModel::CostModel(std::size_t n, std::size_t m) : n_(n), m_(m), q_(Eigen::VectorXd::Ones(n)) {
  if (n == 0 || m == 0) fail(ErrorKind::construction, "model needs at least one agent and one dimension");
}

void CostModel::set_q(const Eigen::VectorXd& q) {
  if (static_cast<std::size_t>(q.size()) != n_) fail(ErrorKind::configuration, "weight vector q has length " + std::to_string(q.size()) + ", expected " + std::to_string(n_));
  if (!q.allFinite() || (q.array() <= 0.0).any()) fail(ErrorKind::configuration, "weights q must be positive");
  q_ = q;
}

std::shared_ptr<CostModel> CostModel::with_weights(const Eigen::VectorXd& q) const {
  auto copy = clone();
  copy->set_q(q);
  return copy;
}

Eigen::MatrixXd CostModel::gradients(const Eigen::MatrixXd& w) const {
  Eigen::MatrixXd g(w.rows(), w.cols());
  for (std::size_t k = 0; k < n_; ++k) g.row(k) = gradient(k, w.row(k).transpose()).transpose();
  return g;
}

Eigen::VectorXd CostModel::weighted_gradient(const Eigen::VectorXd& w, const Eigen::VectorXd& weights) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(m_);
  for (std::size_t k = 0; k < n_; ++k) g += weights(k) * gradient(k, w);
  return g;
}

double CostModel::weighted_value(const Eigen::VectorXd& w, const Eigen::VectorXd& weights) const {
  double f = 0.0;
  for (std::size_t k = 0; k < n_; ++k) f += weights(k) * value(k, w);
  return f;
}

QuadraticCost::QuadraticCost(ModelKind kind, std::size_t n, std::size_t m) : CostModel(n, m), kind_(kind) {}

QuadraticCost QuadraticCost::least_squares(std::vector<Eigen::MatrixXd> u, std::vector<Eigen::VectorXd> d) {
  if (u.empty() || u.size() != d.size()) fail(ErrorKind::construction, "least squares needs one (U, d) pair per agent");
  const auto m = static_cast<std::size_t>(u[0].cols());
  QuadraticCost out(ModelKind::least_squares, u.size(), m);
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (static_cast<std::size_t>(u[k].cols()) != m || u[k].rows() != d[k].size())
      fail(ErrorKind::construction, "inconsistent least squares data at agent " + std::to_string(k));
    out.h_.push_back(u[k].transpose() * u[k]);
    out.b_.push_back(u[k].transpose() * d[k]);
    out.c_.push_back(0.5 * d[k].squaredNorm());
  }
  out.u_ = std::move(u);
  out.d_ = std::move(d);
  return out;
}

QuadraticCost QuadraticCost::mse(std::vector<Eigen::MatrixXd> r, std::vector<Eigen::VectorXd> cross) {
  if (r.empty() || r.size() != cross.size()) fail(ErrorKind::construction, "MSE model needs one (R, r) pair per agent");
  const auto m = static_cast<std::size_t>(r[0].rows());
  QuadraticCost out(ModelKind::mse_quadratic, r.size(), m);
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t k = 0; k < r.size(); ++k) {
    if (static_cast<std::size_t>(r[k].rows()) != m || r[k].cols() != r[k].rows() || static_cast<std::size_t>(cross[k].size()) != m)
      fail(ErrorKind::construction, "inconsistent MSE data at agent " + std::to_string(k));
    if ((r[k] - r[k].transpose()).cwiseAbs().maxCoeff() > 1e-12) fail(ErrorKind::construction, "covariance R_" + std::to_string(k) + " is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r[k], Eigen::EigenvaluesOnly);
    if (es.eigenvalues()(0) < -1e-12) fail(ErrorKind::construction, "covariance R_" + std::to_string(k) + " is not positive semidefinite");
    total += r[k];
    out.h_.push_back(r[k]);
    out.b_.push_back(cross[k]);
    out.c_.push_back(0.0);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(total, Eigen::EigenvaluesOnly);
  if (es.eigenvalues()(0) <= 0.0) fail(ErrorKind::construction, "sum of covariances is not positive definite");
  return out;
}

double QuadraticCost::value(std::size_t k, const Eigen::VectorXd& w) const {
  check_agent(*this, k, w);
  if (!u_.empty()) return 0.5 * (u_[k] * w - d_[k]).squaredNorm();
  return 0.5 * w.dot(h_[k] * w) - b_[k].dot(w) + c_[k];
}

Eigen::VectorXd QuadraticCost::gradient(std::size_t k, const Eigen::VectorXd& w) const {
  check_agent(*this, k, w);
  return h_[k] * w - b_[k];
}

Eigen::MatrixXd QuadraticCost::gradients(const Eigen::MatrixXd& w) const {
  Eigen::MatrixXd g(w.rows(), w.cols());
  for (std::size_t k = 0; k < n_; ++k) g.row(k).noalias() = w.row(k) * h_[k] - b_[k].transpose();
  return g;
}

HessianBounds QuadraticCost::hessian_bounds() const {
  HessianBounds hb;
  hb.nu = -1.0;
  for (std::size_t k = 0; k < n_; ++k) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h_[k], Eigen::EigenvaluesOnly);
    hb.delta = std::max(hb.delta, es.eigenvalues()(m_ - 1));
    if (es.eigenvalues()(0) > hb.nu) {
      hb.nu = es.eigenvalues()(0);
      hb.k_o = k;
    }
  }
  if (hb.nu <= 1e-12 * std::max(1.0, hb.delta)) fail(ErrorKind::assumption, "no agent has a strongly convex cost (nu <= 0)");
  return hb;
}

nlohmann::json QuadraticCost::to_json() const {
  nlohmann::json j;
  if (recipe_) {
    j = *recipe_;
  } else if (kind_ == ModelKind::least_squares) {
    j["kind"] = "least_squares";
    j["U"] = nlohmann::json::array();
    j["d"] = nlohmann::json::array();
    for (std::size_t k = 0; k < n_; ++k) {
      j["U"].push_back(exdiff::to_json(u_[k]));
      j["d"].push_back(exdiff::to_json(d_[k]));
    }
  } else {
    j["kind"] = "mse_quadratic";
    j["R"] = nlohmann::json::array();
    j["r"] = nlohmann::json::array();
    for (std::size_t k = 0; k < n_; ++k) {
      j["R"].push_back(exdiff::to_json(h_[k]));
      j["r"].push_back(exdiff::to_json(b_[k]));
    }
  }
  j["n_agents"] = n_;
  j["dim"] = m_;
  j["q"] = exdiff::to_json(q_);
  return j;
}

LogisticCost::LogisticCost(std::vector<Eigen::MatrixXd> h, std::vector<Eigen::VectorXd> labels, double ridge)
    : CostModel(h.size(), h.empty() ? 0 : static_cast<std::size_t>(h[0].cols())), h_(std::move(h)), y_(std::move(labels)), ridge_(ridge) {
  if (!(ridge_ > 0.0)) fail(ErrorKind::construction, "logistic ridge must be positive");
  if (y_.size() != h_.size()) fail(ErrorKind::construction, "logistic model needs one label vector per agent");
  for (std::size_t k = 0; k < h_.size(); ++k) {
    if (static_cast<std::size_t>(h_[k].cols()) != m_ || h_[k].rows() != y_[k].size() || h_[k].rows() == 0)
      fail(ErrorKind::construction, "inconsistent logistic data at agent " + std::to_string(k));
    for (Eigen::Index l = 0; l < y_[k].size(); ++l)
      if (y_[k](l) != 1.0 && y_[k](l) != -1.0) fail(ErrorKind::construction, "logistic labels must be +1 or -1");
  }
}

double LogisticCost::value(std::size_t k, const Eigen::VectorXd& w) const {
  check_agent(*this, k, w);
  Eigen::VectorXd z = y_[k].cwiseProduct(h_[k] * w);
  double s = 0.0;
  for (Eigen::Index l = 0; l < z.size(); ++l) s += softplus(-z(l));
  return s / static_cast<double>(z.size()) + 0.5 * ridge_ * w.squaredNorm();
}

Eigen::VectorXd LogisticCost::gradient(std::size_t k, const Eigen::VectorXd& w) const {
  check_agent(*this, k, w);
  Eigen::VectorXd z = y_[k].cwiseProduct(h_[k] * w);
  Eigen::VectorXd coef(z.size());
  for (Eigen::Index l = 0; l < z.size(); ++l) coef(l) = -y_[k](l) * sigmoid(-z(l));
  return h_[k].transpose() * coef / static_cast<double>(z.size()) + ridge_ * w;
}

Eigen::MatrixXd LogisticCost::hessian(std::size_t k, const Eigen::VectorXd& w) const {
  check_agent(*this, k, w);
  Eigen::VectorXd z = y_[k].cwiseProduct(h_[k] * w);
  Eigen::VectorXd s(z.size());
  for (Eigen::Index l = 0; l < z.size(); ++l) {
    double t = sigmoid(z(l));
    s(l) = t * (1.0 - t);
  }
  Eigen::MatrixXd out = h_[k].transpose() * s.asDiagonal() * h_[k] / static_cast<double>(z.size());
  out.diagonal().array() += ridge_;
  return out;
}

HessianBounds LogisticCost::hessian_bounds() const {
  HessianBounds hb{ridge_, ridge_, 0};
  for (std::size_t k = 0; k < n_; ++k) {
    Eigen::MatrixXd g = h_[k].transpose() * h_[k] / (4.0 * static_cast<double>(h_[k].rows()));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g, Eigen::EigenvaluesOnly);
    hb.delta = std::max(hb.delta, ridge_ + es.eigenvalues()(m_ - 1));
  }
  return hb;
}

nlohmann::json LogisticCost::to_json() const {
  nlohmann::json j;
  if (recipe_) {
    j = *recipe_;
  } else {
    j["kind"] = "logistic";
    j["ridge"] = ridge_;
    j["H"] = nlohmann::json::array();
    j["labels"] = nlohmann::json::array();
    for (std::size_t k = 0; k < n_; ++k) {
      j["H"].push_back(exdiff::to_json(h_[k]));
      j["labels"].push_back(exdiff::to_json(y_[k]));
    }
  }
  j["n_agents"] = n_;
  j["dim"] = m_;
  j["q"] = exdiff::to_json(q_);
  return j;
}

std::shared_ptr<QuadraticCost> least_squares_model(std::uint64_t seed, std::size_t n_agents, std::size_t dim, std::size_t samples_per_agent) {
  if (n_agents == 0 || dim == 0 || samples_per_agent == 0) fail(ErrorKind::construction, "least squares sizes must be positive");
  std::mt19937_64 rng(seed);
  std::vector<Eigen::MatrixXd> u;
  std::vector<Eigen::VectorXd> d;
  for (std::size_t k = 0; k < n_agents; ++k) {
    u.push_back(normal_matrix(rng, samples_per_agent, dim));
    d.push_back(normal_matrix(rng, samples_per_agent, 1).col(0));
  }
  auto model = std::make_shared<QuadraticCost>(QuadraticCost::least_squares(std::move(u), std::move(d)));
  model->set_recipe({{"kind", "least_squares"}, {"seed", seed}, {"samples_per_agent", samples_per_agent}});
  return model;
}

std::shared_ptr<LogisticCost> logistic_model(std::uint64_t seed, std::size_t n_agents, std::size_t dim, std::size_t samples_per_agent, double ridge,
                                             double label_noise) {
  if (n_agents == 0 || dim == 0 || samples_per_agent == 0) fail(ErrorKind::construction, "logistic sizes must be positive");
  if (!(label_noise >= 0.0 && label_noise < 1.0)) fail(ErrorKind::construction, "label noise must lie in [0, 1)");
  std::mt19937_64 rng(seed);
  Eigen::VectorXd planted = normal_matrix(rng, dim, 1).col(0);
  std::bernoulli_distribution flip(label_noise);
  std::vector<Eigen::MatrixXd> h;
  std::vector<Eigen::VectorXd> y;
  for (std::size_t k = 0; k < n_agents; ++k) {
    h.push_back(normal_matrix(rng, samples_per_agent, dim));
    Eigen::VectorXd labels(samples_per_agent);
    for (std::size_t l = 0; l < samples_per_agent; ++l) {
      double s = h.back().row(l).dot(planted) >= 0.0 ? 1.0 : -1.0;
      labels(l) = flip(rng) ? -s : s;
    }
    y.push_back(labels);
  }
  auto model = std::make_shared<LogisticCost>(std::move(h), std::move(y), ridge);
  model->set_recipe({{"kind", "logistic"}, {"seed", seed}, {"samples_per_agent", samples_per_agent}, {"ridge", ridge}, {"label_noise", label_noise}});
  return model;
}

std::shared_ptr<QuadraticCost> mse_quadratic_model(std::vector<Eigen::MatrixXd> r, std::vector<Eigen::VectorXd> cross) {
  return std::make_shared<QuadraticCost>(QuadraticCost::mse(std::move(r), std::move(cross)));
}

std::shared_ptr<QuadraticCost> mse_identical_model(std::size_t n_agents, double sigma2, const Eigen::VectorXd& w_o) {
  if (!(sigma2 > 0.0)) fail(ErrorKind::construction, "sigma2 must be positive");
  const auto m = w_o.size();
  std::vector<Eigen::MatrixXd> r(n_agents, sigma2 * Eigen::MatrixXd::Identity(m, m));
  std::vector<Eigen::VectorXd> cross(n_agents, sigma2 * w_o);
  return mse_quadratic_model(std::move(r), std::move(cross));
}

namespace {

Eigen::VectorXd solve_quadratic(const QuadraticCost& model, const Eigen::VectorXd& weights) {
  const auto m = model.dim();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
  for (std::size_t k = 0; k < model.n_agents(); ++k) {
    h += weights(k) * model.hessians()[k];
    b += weights(k) * model.linear_terms()[k];
  }
  Eigen::LLT<Eigen::MatrixXd> llt(h);
  if (llt.info() != Eigen::Success) fail(ErrorKind::assumption, "aggregate Hessian is not positive definite");
  Eigen::VectorXd w = llt.solve(b);
  // one step of iterative refinement
  w += llt.solve(b - h * w);
  return w;
}

Eigen::VectorXd solve_smooth(const CostModel& model, const Eigen::VectorXd& weights, double& residual) {
  constexpr int cap = 200000;
  auto hb = model.hessian_bounds();
  const double lipschitz = weights.sum() * hb.delta;
  const double safe_step = 1.0 / lipschitz;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(model.dim());
  double f = model.weighted_value(w, weights);
  Eigen::VectorXd g = model.weighted_gradient(w, weights);
  double t = safe_step;
  for (int it = 0; it < cap && g.norm() > 1e-12; ++it) {
    t *= 2.0;
    const double g2 = g.squaredNorm();
    Eigen::VectorXd trial;
    double ft = 0.0;
    for (;;) {
      if (t <= safe_step) {
        t = safe_step;
        trial = w - t * g;
        ft = model.weighted_value(trial, weights);
        break;
      }
      trial = w - t * g;
      ft = model.weighted_value(trial, weights);
      if (ft <= f - 0.5 * t * g2) break;
      t *= 0.5;
    }
    w = trial;
    f = ft;
    g = model.weighted_gradient(w, weights);
  }
  residual = g.norm();
  if (residual > 1e-8) fail(ErrorKind::convergence, "centralized solver stopped at gradient norm " + std::to_string(residual));
  return w;
}

}  // namespace

GroundTruth solve_centralized(const CostModel& model) {
  GroundTruth gt;
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(model.n_agents());
  if (auto* quad = dynamic_cast<const QuadraticCost*>(&model)) {
    gt.w_star = solve_quadratic(*quad, model.q());
    gt.w_o = solve_quadratic(*quad, ones);
    gt.solver_residual = model.weighted_gradient(gt.w_star, model.q()).norm();
  } else {
    gt.w_star = solve_smooth(model, model.q(), gt.solver_residual);
    double unused = 0.0;
    gt.w_o = (model.q() - ones).cwiseAbs().maxCoeff() == 0.0 ? gt.w_star : solve_smooth(model, ones, unused);
  }
  return gt;
}

namespace {

std::size_t get_size(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number_integer() || j[key].get<long long>() <= 0)
    fail(ErrorKind::configuration, std::string("model.") + key + " must be a positive integer");
  return j[key].get<std::size_t>();
}

std::vector<Eigen::MatrixXd> matrices_from_json(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array()) fail(ErrorKind::configuration, std::string("model.") + key + " must be an array of matrices");
  std::vector<Eigen::MatrixXd> out;
  for (const auto& m : j[key]) out.push_back(matrix_from_json(m));
  return out;
}

std::vector<Eigen::VectorXd> vectors_from_json(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array()) fail(ErrorKind::configuration, std::string("model.") + key + " must be an array of vectors");
  std::vector<Eigen::VectorXd> out;
  for (const auto& v : j[key]) out.push_back(vector_from_json(v));
  return out;
}

}  // namespace

std::shared_ptr<CostModel> model_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) fail(ErrorKind::configuration, "model.kind must be a string");
  const auto kind = j["kind"].get<std::string>();
  std::shared_ptr<CostModel> model;
  if (kind == "least_squares") {
    if (j.contains("U")) {
      model = std::make_shared<QuadraticCost>(QuadraticCost::least_squares(matrices_from_json(j, "U"), vectors_from_json(j, "d")));
    } else {
      model = least_squares_model(j.value("seed", std::uint64_t{1}), get_size(j, "n_agents"), get_size(j, "dim"), get_size(j, "samples_per_agent"));
    }
  } else if (kind == "logistic") {
    if (j.contains("H")) {
      model = std::make_shared<LogisticCost>(matrices_from_json(j, "H"), vectors_from_json(j, "labels"), j.value("ridge", 0.1));
    } else {
      model = logistic_model(j.value("seed", std::uint64_t{1}), get_size(j, "n_agents"), get_size(j, "dim"), get_size(j, "samples_per_agent"), j.value("ridge", 0.1),
                             j.value("label_noise", 0.1));
    }
  } else if (kind == "mse_quadratic") {
    if (j.contains("R")) {
      model = mse_quadratic_model(matrices_from_json(j, "R"), vectors_from_json(j, "r"));
    } else {
      auto w_o = j.contains("w_o") ? vector_from_json(j["w_o"]) : Eigen::VectorXd(Eigen::VectorXd::Ones(get_size(j, "dim")));
      model = mse_identical_model(get_size(j, "n_agents"), j.value("sigma2", 1.0), w_o);
    }
  } else {
    fail(ErrorKind::configuration, "unknown model.kind '" + kind + "'");
  }
  if (j.contains("n_agents") && j["n_agents"].get<std::size_t>() != model->n_agents())
    fail(ErrorKind::configuration, "model.n_agents does not match the model data");
  if (j.contains("dim") && j["dim"].get<std::size_t>() != model->dim()) fail(ErrorKind::configuration, "model.dim does not match the model data");
  if (j.contains("q")) model = model->with_weights(vector_from_json(j["q"]));
  return model;
}

void save_model(const CostModel& model, const std::string& path) { write_json_file(path, model.to_json()); }

std::shared_ptr<CostModel> load_model(const std::string& path) { return model_from_json(read_json_file(path)); }

}  // namespace exdiff
