#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "strata/dataset.hpp"
#include "strata/simulation.hpp"
#include "strata/tuning.hpp"
#include "strata/wlasso.hpp"

namespace strata {

enum class Method { m1, m1_adaptive, m1_relaxed, m2, m2_adaptive, indep, ident, inter };
enum class Selector { cv, two_step_bic };

const char* to_string(Method m);
Method method_from_string(const std::string& name);
const char* to_string(Selector s);
Selector selector_from_string(const std::string& name);

struct MethodOptions {
    bool intercept = false;  // M1 family: free common intercept, penalized deviations
    double rho = 1.0;        // adaptive exponent
    int reference = 0;       // inter
    std::vector<double> phis{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    int n_ratios = 50;       // M1-type and inter grids
    int n_lambda = 50;       // lambda2 per ratio; lambda values of indep / ident
    int n_lambda1 = 10;      // M2 grids
    int n_lambda2 = 10;
    Selector selection = Selector::two_step_bic;
    int folds = 10;
    std::uint64_t seed = 1;
    SolverConfig solver;
};

/// A fit reported in B, common + deviations form.
struct MethodFit {
    CoefMatrix coef;
    Eigen::VectorXd common;       // p; zero for indep, the reference column for inter
    Eigen::MatrixXd deviations;   // p x K, B - common
    double objective = 0.0;
    double kkt_residual = 0.0;
    int df = 0;                   // free parameters of the refit structure
};

/// Fit at one tuning point (indep and ident read lambda1, relaxed M1 reads phi).
MethodFit fit_method(const StratifiedDataset& data, Method method, const GridPoint& point,
                     const MethodOptions& opts = {});

/// Independent lassos with one lambda per stratum.
MethodFit fit_indep_method(const StratifiedDataset& data, const std::vector<double>& lambda,
                           const MethodOptions& opts = {});

/// Common effect of B in the method's own decomposition: the shrunk weighted
/// median (M1), the median midpoint (M2), the reference coefficients (adaptive
/// methods and inter), the pooled column (ident) or zero (indep).
Eigen::VectorXd method_common(const StratifiedDataset& data, Method method, const GridPoint& point,
                              const Eigen::MatrixXd& B, const MethodOptions& opts = {});

/// Default grid of a method on `data`.
std::vector<GridPoint> default_grid(const StratifiedDataset& data, Method method, const MethodOptions& opts = {});

/// Selection over one grid.
struct StratumSelection {
    std::vector<GridPoint> grid;
    Selection selection;
};

struct TunedFit {
    Method method = Method::m1;
    Selector selector = Selector::two_step_bic;
    /// One entry; for indep one per stratum (each tuned on its own data).
    std::vector<StratumSelection> selections;
    /// Penalized fit at the selected point(s), on the full data.
    MethodFit fit;
    /// Reported estimator: the unpenalized refit on the selected structure for
    /// 2stepBIC (objective = unpenalized loss, kkt_residual of the penalized fit),
    /// the penalized fit for CV.
    MethodFit estimate;
};

TunedFit tune_method(const StratifiedDataset& data, Method method, const MethodOptions& opts = {});

/// Simulation runner: every method is tuned on every replication.
struct ReplicationSpec {
    SimulationDesign design;
    std::vector<Method> methods{Method::m1};
    int replications = 100;
    MethodOptions options;
    std::vector<double> thresholds;  // extra support metrics after hard thresholding
};

struct ReplicationRow {
    int replication = 0;
    std::uint64_t seed = 0;  // data seed of the replication
    Method method = Method::m1;
    std::string metric;
    double value = 0.0;
};

/// Replication r uses the design seed Rng::derive(design.seed, r); rows come
/// back ordered by replication, method, metric.
std::vector<ReplicationRow> run_replications(const ReplicationSpec& spec);
std::string replication_csv(const ReplicationSpec& spec, const std::vector<ReplicationRow>& rows);

} // namespace strata
