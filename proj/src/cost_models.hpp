#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace exdiff {

enum class ModelKind { least_squares, logistic, mse_quadratic };

std::string to_string(ModelKind kind);

struct HessianBounds {
  double nu = 0.0;
  double delta = 0.0;
  std::size_t k_o = 0;
};

struct GroundTruth {
  Eigen::VectorXd w_star;
  Eigen::VectorXd w_o;
  double solver_residual = 0.0;
};

class CostModel {
 public:
  virtual ~CostModel() = default;

  virtual ModelKind kind() const = 0;
  virtual double value(std::size_t k, const Eigen::VectorXd& w) const = 0;
  virtual Eigen::VectorXd gradient(std::size_t k, const Eigen::VectorXd& w) const = 0;
  virtual Eigen::MatrixXd hessian(std::size_t k, const Eigen::VectorXd& w) const = 0;
  virtual bool constant_hessian() const = 0;
  virtual HessianBounds hessian_bounds() const = 0;
  virtual nlohmann::json to_json() const = 0;
  virtual std::shared_ptr<CostModel> clone() const = 0;

  std::size_t n_agents() const { return n_; }
  std::size_t dim() const { return m_; }
  const Eigen::VectorXd& q() const { return q_; }
  std::shared_ptr<CostModel> with_weights(const Eigen::VectorXd& q) const;

  // Row k of the result is the gradient of J_k at row k of w.
  virtual Eigen::MatrixXd gradients(const Eigen::MatrixXd& w) const;
  Eigen::VectorXd weighted_gradient(const Eigen::VectorXd& w, const Eigen::VectorXd& weights) const;
  double weighted_value(const Eigen::VectorXd& w, const Eigen::VectorXd& weights) const;

 protected:
  CostModel(std::size_t n, std::size_t m);
  void set_q(const Eigen::VectorXd& q);

  std::size_t n_;
  std::size_t m_;
  Eigen::VectorXd q_;
};

using ModelPtr = std::shared_ptr<const CostModel>;

// J_k(w) = 1/2 w'H_k w - b_k'w + c_k.
class QuadraticCost : public CostModel {
 public:
  ModelKind kind() const override { return kind_; }
  double value(std::size_t k, const Eigen::VectorXd& w) const override;
  Eigen::VectorXd gradient(std::size_t k, const Eigen::VectorXd& w) const override;
  Eigen::MatrixXd hessian(std::size_t k, const Eigen::VectorXd&) const override { return h_[k]; }
  bool constant_hessian() const override { return true; }
  HessianBounds hessian_bounds() const override;
  nlohmann::json to_json() const override;
  std::shared_ptr<CostModel> clone() const override { return std::make_shared<QuadraticCost>(*this); }
  Eigen::MatrixXd gradients(const Eigen::MatrixXd& w) const override;

  const std::vector<Eigen::MatrixXd>& hessians() const { return h_; }
  const std::vector<Eigen::VectorXd>& linear_terms() const { return b_; }
  // Seeded generation parameters; exported in place of the raw data.
  void set_recipe(nlohmann::json recipe) { recipe_ = std::move(recipe); }

  static QuadraticCost least_squares(std::vector<Eigen::MatrixXd> u, std::vector<Eigen::VectorXd> d);
  static QuadraticCost mse(std::vector<Eigen::MatrixXd> r, std::vector<Eigen::VectorXd> cross);

 private:
  QuadraticCost(ModelKind kind, std::size_t n, std::size_t m);

  ModelKind kind_;
  std::vector<Eigen::MatrixXd> h_;
  std::vector<Eigen::VectorXd> b_;
  std::vector<double> c_;
  std::vector<Eigen::MatrixXd> u_;
  std::vector<Eigen::VectorXd> d_;
  std::optional<nlohmann::json> recipe_;
};

class LogisticCost : public CostModel {
 public:
  LogisticCost(std::vector<Eigen::MatrixXd> h, std::vector<Eigen::VectorXd> labels, double ridge);

  ModelKind kind() const override { return ModelKind::logistic; }
  double value(std::size_t k, const Eigen::VectorXd& w) const override;
  Eigen::VectorXd gradient(std::size_t k, const Eigen::VectorXd& w) const override;
  Eigen::MatrixXd hessian(std::size_t k, const Eigen::VectorXd& w) const override;
  bool constant_hessian() const override { return false; }
  HessianBounds hessian_bounds() const override;
  nlohmann::json to_json() const override;
  std::shared_ptr<CostModel> clone() const override { return std::make_shared<LogisticCost>(*this); }

  double ridge() const { return ridge_; }
  const std::vector<Eigen::MatrixXd>& features() const { return h_; }
  const std::vector<Eigen::VectorXd>& labels() const { return y_; }
  void set_recipe(nlohmann::json recipe) { recipe_ = std::move(recipe); }

 private:
  std::vector<Eigen::MatrixXd> h_;
  std::vector<Eigen::VectorXd> y_;
  double ridge_;
  std::optional<nlohmann::json> recipe_;
};

std::shared_ptr<QuadraticCost> least_squares_model(std::uint64_t seed, std::size_t n_agents, std::size_t dim, std::size_t samples_per_agent);
std::shared_ptr<LogisticCost> logistic_model(std::uint64_t seed, std::size_t n_agents, std::size_t dim, std::size_t samples_per_agent, double ridge,
                                             double label_noise = 0.1);
std::shared_ptr<QuadraticCost> mse_quadratic_model(std::vector<Eigen::MatrixXd> r, std::vector<Eigen::VectorXd> cross);
// R_k = sigma2 I, r_k = sigma2 w_o for every agent.
std::shared_ptr<QuadraticCost> mse_identical_model(std::size_t n_agents, double sigma2, const Eigen::VectorXd& w_o);

GroundTruth solve_centralized(const CostModel& model);
inline HessianBounds hessian_bounds(const CostModel& model) { return model.hessian_bounds(); }

std::shared_ptr<CostModel> model_from_json(const nlohmann::json& j);
void save_model(const CostModel& model, const std::string& path);
std::shared_ptr<CostModel> load_model(const std::string& path);

}  // namespace exdiff
