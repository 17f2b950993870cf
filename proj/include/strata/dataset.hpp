#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace strata {

enum class Loss { linear, logistic };

const char* to_string(Loss loss);
Loss loss_from_string(const std::string& name);

/// One block of the stratified data: design rows and responses of a single stratum.
struct Stratum {
    std::string id;
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
};

/// K strata sharing the same p covariates. Immutable once constructed; the
/// constructor validates shape, finiteness and (for logistic loss) 0/1 responses.
class StratifiedDataset {
public:
    StratifiedDataset(std::vector<Stratum> strata, std::vector<std::string> covariate_names,
                      Loss loss = Loss::linear);

    /// Convenience constructor with generated covariate names x1..xp and ids 1..K.
    static StratifiedDataset from_blocks(std::vector<Eigen::MatrixXd> xs, std::vector<Eigen::VectorXd> ys,
                                         Loss loss = Loss::linear);

    int strata() const noexcept { return static_cast<int>(strata_.size()); }
    int features() const noexcept { return static_cast<int>(names_.size()); }
    /// Total number of observations n = sum of n_k.
    int rows() const noexcept { return rows_; }
    int rows(int k) const { return static_cast<int>(strata_.at(k).y.size()); }
    Loss loss() const noexcept { return loss_; }

    const Stratum& stratum(int k) const { return strata_.at(k); }
    const std::vector<Stratum>& blocks() const noexcept { return strata_; }
    const std::vector<std::string>& covariate_names() const noexcept { return names_; }

    /// Row-concatenated design and responses, strata in order.
    Eigen::MatrixXd pooled_x() const;
    Eigen::VectorXd pooled_y() const;

    /// Copy keeping, for each stratum k, the rows listed in rows_per_stratum[k].
    StratifiedDataset subset(const std::vector<std::vector<int>>& rows_per_stratum) const;

private:
    std::vector<Stratum> strata_;
    std::vector<std::string> names_;
    Loss loss_;
    int rows_ = 0;
};

/// Column-wise standardization over the pooled rows (mean 0, population variance 1).
/// Zero-variance columns are only centered.
StratifiedDataset standardize(const StratifiedDataset& data);

/// Common-plus-deviation representation: beta_k = common + deviations[k].
struct CoefDecomposition {
    Eigen::VectorXd common;
    std::vector<Eigen::VectorXd> deviations;
    /// Present only when the fit carries intercepts.
    std::optional<double> common_intercept;
    Eigen::VectorXd intercept_deviations;  // size K when common_intercept is set

    static CoefDecomposition zeros(int p, int strata);
    int features() const noexcept { return static_cast<int>(common.size()); }
    int strata() const noexcept { return static_cast<int>(deviations.size()); }
};

/// p x K coefficient matrix, column k = beta_k. `intercepts` is empty or of size K.
struct CoefMatrix {
    Eigen::MatrixXd B;
    Eigen::VectorXd intercepts;

    int features() const noexcept { return static_cast<int>(B.rows()); }
    int strata() const noexcept { return static_cast<int>(B.cols()); }
    double intercept(int k) const { return intercepts.size() == 0 ? 0.0 : intercepts(k); }
};

struct NoiseSpec {
    explicit NoiseSpec(double sigma2);
    double sigma2;
};

CoefMatrix reconstruct(const CoefDecomposition& dec);

/// Linear predictor of stratum k under `coef`.
Eigen::VectorXd predict(const StratifiedDataset& data, const CoefMatrix& coef, int k);

struct CsvSchema {
    std::string stratum_column = "stratum";
    std::string response_column = "response";
    /// Empty means every remaining column, in file order.
    std::vector<std::string> feature_columns;
    Loss loss = Loss::linear;
    bool standardize = false;
};

StratifiedDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
StratifiedDataset parse_csv(const std::string& text, const CsvSchema& schema = {});

/// Writes stratum,response,features... with shortest round-trip number formatting,
/// rows grouped by stratum in dataset order.
std::string to_csv(const StratifiedDataset& data, const CsvSchema& schema = {});
void write_csv(const StratifiedDataset& data, const std::filesystem::path& path, const CsvSchema& schema = {});

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

} // namespace strata
