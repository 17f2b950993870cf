#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "strata/dataset.hpp"

namespace strata {

enum class DesignKind { study1, study2, twotask, confbetas };
enum class Covariance { toeplitz_half, identity };
enum class Heterogeneity { none, low, moderate };

const char* to_string(DesignKind kind);
DesignKind design_kind_from_string(const std::string& name);
const char* to_string(Covariance c);
Covariance covariance_from_string(const std::string& name);
const char* to_string(Heterogeneity h);
Heterogeneity heterogeneity_from_string(const std::string& name);

struct SimulationDesign {
    DesignKind kind = DesignKind::study1;
    int K = 5;
    int p = 15;
    int n_k = 225;
    double sp_glob = 0.4;
    double sp_spec = 0.0;
    /// Noise variance; ignored when snr is set.
    double sigma2 = 1.0;
    /// Var(x' beta_k) / sigma2 averaged over strata, computed from Sigma.
    std::optional<double> snr;
    Covariance covariance = Covariance::toeplitz_half;
    Heterogeneity heterogeneity = Heterogeneity::none;
    double alpha = 0.5;  // twotask overlap
    double c = 1.0;      // twotask rescaled sample size
    double beta = 1.0;   // twotask nonzero magnitude
    int pattern = 0;     // confbetas: 1..4, or 0 for all four (one per covariate, cycling)
    std::uint64_t seed = 1;

    /// Study defaults: study1 K=5 p=15 n_k=225 Toeplitz; study2 K=5 p=n_k=100
    /// identity; twotask K=2 p=128 identity sigma2=0.1; confbetas K=10 p=4 identity.
    static SimulationDesign defaults(DesignKind kind);
    void validate() const;
};

struct GroundTruth {
    Eigen::MatrixXd B_star;           // p x K
    Eigen::VectorXd common_star;      // p
    Eigen::MatrixXd deviations_star;  // p x K
    double sigma2 = 1.0;
};

/// Covariance matrix of the design rows.
Eigen::MatrixXd design_covariance(const SimulationDesign& design);

/// Sample size per stratum of the two-task design, ceil(c s log(p - (2 - alpha) s) / 2).
int twotask_sample_size(int p, double alpha, double c);

/// The four fixed K = 10 coefficient vectors (sorted increasingly).
std::vector<std::vector<double>> confbetas_patterns();

GroundTruth make_truth(const SimulationDesign& design);
std::pair<StratifiedDataset, GroundTruth> generate(const SimulationDesign& design);

struct PredictionMetric {
    double value = 0.0;  // log(sum_k ||X_k (beta*_k - beta_k)||^2); -inf on exact recovery
    bool exact = false;
};

PredictionMetric metric_prediction(const GroundTruth& truth, const CoefMatrix& estimate, const StratifiedDataset& data);
/// sum_k ||beta*_k - beta_k||^2 / (K p)
double metric_estimation(const GroundTruth& truth, const CoefMatrix& estimate);

struct SupportMetric {
    double accuracy = 0.0;
    double f1 = 0.0;
};
SupportMetric metric_support(const GroundTruth& truth, const CoefMatrix& estimate);

/// Entries with |b| < t set to zero (intercepts kept).
CoefMatrix hard_threshold(const CoefMatrix& estimate, double t);

} // namespace strata
