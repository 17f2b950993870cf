#include "strata/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "strata/error.hpp"

namespace strata {

const char* to_string(Loss loss)
{
    return loss == Loss::linear ? "linear" : "logistic";
}

Loss loss_from_string(const std::string& name)
{
    if (name == "linear") return Loss::linear;
    if (name == "logistic") return Loss::logistic;
    throw InvalidArgument("unknown loss '" + name + "'");
}

StratifiedDataset::StratifiedDataset(std::vector<Stratum> strata, std::vector<std::string> covariate_names,
                                     Loss loss)
    : strata_(std::move(strata)), names_(std::move(covariate_names)), loss_(loss)
{
    if (strata_.empty()) throw DimensionError("dataset needs at least one stratum");
    const auto p = static_cast<Eigen::Index>(names_.size());
    for (const auto& s : strata_) {
        if (s.x.cols() != p)
            throw DimensionError("stratum '" + s.id + "' has " + std::to_string(s.x.cols()) +
                                 " columns, expected " + std::to_string(p));
        if (s.x.rows() != s.y.size() || s.y.size() == 0)
            throw DimensionError("stratum '" + s.id + "' has inconsistent or empty rows");
        if (!s.x.allFinite() || !s.y.allFinite())
            throw InvalidArgument("stratum '" + s.id + "' contains non-finite values");
        if (loss_ == Loss::logistic) {
            for (Eigen::Index i = 0; i < s.y.size(); ++i)
                if (s.y(i) != 0.0 && s.y(i) != 1.0)
                    throw InvalidArgument("logistic response must be 0 or 1 (stratum '" + s.id + "')");
        }
        rows_ += static_cast<int>(s.y.size());
    }
}

StratifiedDataset StratifiedDataset::from_blocks(std::vector<Eigen::MatrixXd> xs, std::vector<Eigen::VectorXd> ys,
                                                 Loss loss)
{
    if (xs.size() != ys.size() || xs.empty()) throw DimensionError("from_blocks: need matching, non-empty blocks");
    std::vector<Stratum> strata;
    for (std::size_t k = 0; k < xs.size(); ++k)
        strata.push_back({std::to_string(k + 1), std::move(xs[k]), std::move(ys[k])});
    std::vector<std::string> names;
    for (Eigen::Index j = 0; j < strata.front().x.cols(); ++j) names.push_back("x" + std::to_string(j + 1));
    return StratifiedDataset(std::move(strata), std::move(names), loss);
}

Eigen::MatrixXd StratifiedDataset::pooled_x() const
{
    Eigen::MatrixXd out(rows_, features());
    Eigen::Index r = 0;
    for (const auto& s : strata_) {
        out.middleRows(r, s.x.rows()) = s.x;
        r += s.x.rows();
    }
    return out;
}

Eigen::VectorXd StratifiedDataset::pooled_y() const
{
    Eigen::VectorXd out(rows_);
    Eigen::Index r = 0;
    for (const auto& s : strata_) {
        out.segment(r, s.y.size()) = s.y;
        r += s.y.size();
    }
    return out;
}

StratifiedDataset StratifiedDataset::subset(const std::vector<std::vector<int>>& rows_per_stratum) const
{
    if (static_cast<int>(rows_per_stratum.size()) != strata())
        throw DimensionError("subset: one row list per stratum required");
    std::vector<Stratum> out;
    for (int k = 0; k < strata(); ++k) {
        const auto& src = strata_[k];
        const auto& idx = rows_per_stratum[k];
        Stratum s{src.id, Eigen::MatrixXd(idx.size(), src.x.cols()), Eigen::VectorXd(idx.size())};
        for (std::size_t i = 0; i < idx.size(); ++i) {
            s.x.row(i) = src.x.row(idx[i]);
            s.y(i) = src.y(idx[i]);
        }
        out.push_back(std::move(s));
    }
    return StratifiedDataset(std::move(out), names_, loss_);
}

StratifiedDataset standardize(const StratifiedDataset& data)
{
    const Eigen::MatrixXd pooled = data.pooled_x();
    const Eigen::RowVectorXd mean = pooled.colwise().mean();
    Eigen::RowVectorXd sd = ((pooled.rowwise() - mean).array().square().colwise().sum() / pooled.rows()).sqrt();
    for (Eigen::Index j = 0; j < sd.size(); ++j)
        if (!(sd(j) > 0.0)) sd(j) = 1.0;
    std::vector<Stratum> out = data.blocks();
    for (auto& s : out) s.x = ((s.x.rowwise() - mean).array().rowwise() / sd.array()).matrix();
    return StratifiedDataset(std::move(out), data.covariate_names(), data.loss());
}

CoefDecomposition CoefDecomposition::zeros(int p, int strata)
{
    CoefDecomposition dec;
    dec.common = Eigen::VectorXd::Zero(p);
    dec.deviations.assign(strata, Eigen::VectorXd::Zero(p));
    return dec;
}

NoiseSpec::NoiseSpec(double s2) : sigma2(s2)
{
    if (!(s2 > 0.0) || !std::isfinite(s2)) throw InvalidArgument("noise variance must be positive and finite");
}

CoefMatrix reconstruct(const CoefDecomposition& dec)
{
    const auto p = dec.common.size();
    const auto K = static_cast<Eigen::Index>(dec.deviations.size());
    CoefMatrix out{Eigen::MatrixXd(p, K), Eigen::VectorXd()};
    for (Eigen::Index k = 0; k < K; ++k) {
        if (dec.deviations[k].size() != p) throw DimensionError("reconstruct: deviation length mismatch");
        out.B.col(k) = dec.common + dec.deviations[k];
    }
    if (dec.common_intercept) {
        if (dec.intercept_deviations.size() != K) throw DimensionError("reconstruct: intercept deviation mismatch");
        out.intercepts = dec.intercept_deviations.array() + *dec.common_intercept;
    }
    return out;
}

Eigen::VectorXd predict(const StratifiedDataset& data, const CoefMatrix& coef, int k)
{
    if (coef.features() != data.features() || coef.strata() != data.strata())
        throw DimensionError("predict: coefficient matrix does not match dataset");
    const auto& s = data.stratum(k);
    Eigen::VectorXd eta = s.x * coef.B.col(k);
    eta.array() += coef.intercept(k);
    return eta;
}

// CSV ------------------------------------------------------------------------

namespace {

std::vector<std::string> split_line(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    cells.push_back(std::move(cur));
    return cells;
}

std::string trim(std::string s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_number(const std::string& cell, long row, const std::string& column)
{
    const std::string t = trim(cell);
    double v = 0.0;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    if (!t.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (t.empty() || ec != std::errc() || ptr != last || !std::isfinite(v))
        throw ParseError("row " + std::to_string(row) + ", column '" + column + "': cannot parse '" + t +
                             "' as a finite number",
                         row);
    return v;
}

} // namespace

StratifiedDataset parse_csv(const std::string& text, const CsvSchema& schema)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("CSV input is empty (a header row is required)");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // UTF-8 BOM
    std::vector<std::string> header = split_line(line);
    for (auto& h : header) h = trim(h);

    auto find_col = [&](const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw SchemaError("missing column '" + name + "'");
    };
    const std::size_t sid = find_col(schema.stratum_column);
    const std::size_t rid = find_col(schema.response_column);
    std::vector<std::size_t> fcols;
    std::vector<std::string> names;
    if (schema.feature_columns.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (i != sid && i != rid) {
                fcols.push_back(i);
                names.push_back(header[i]);
            }
    } else {
        for (const auto& f : schema.feature_columns) {
            fcols.push_back(find_col(f));
            names.push_back(f);
        }
    }
    if (fcols.empty()) throw SchemaError("schema needs at least one feature column");

    std::vector<std::string> order;
    std::unordered_map<std::string, std::size_t> index;
    std::vector<std::vector<double>> xs, ys;
    long row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row;
        auto cells = split_line(line);
        if (cells.size() != header.size())
            throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                                 " cells, found " + std::to_string(cells.size()),
                             row);
        const std::string id = trim(cells[sid]);
        auto [it, inserted] = index.try_emplace(id, order.size());
        if (inserted) {
            order.push_back(id);
            xs.emplace_back();
            ys.emplace_back();
        }
        ys[it->second].push_back(parse_number(cells[rid], row, header[rid]));
        for (auto c : fcols) xs[it->second].push_back(parse_number(cells[c], row, header[c]));
    }
    if (order.empty()) throw SchemaError("CSV input has no data rows");

    const auto p = static_cast<Eigen::Index>(fcols.size());
    std::vector<Stratum> strata;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto nk = static_cast<Eigen::Index>(ys[k].size());
        Stratum s{order[k], Eigen::MatrixXd(nk, p), Eigen::Map<Eigen::VectorXd>(ys[k].data(), nk)};
        s.x = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(xs[k].data(), nk, p);
        strata.push_back(std::move(s));
    }
    StratifiedDataset data(std::move(strata), std::move(names), schema.loss);
    return schema.standardize ? standardize(data) : data;
}

StratifiedDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) throw SchemaError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_csv(ss.str(), schema);
}

std::string format_double(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string to_csv(const StratifiedDataset& data, const CsvSchema& schema)
{
    std::string out = schema.stratum_column + "," + schema.response_column;
    for (const auto& n : data.covariate_names()) out += "," + n;
    out += "\n";
    for (const auto& s : data.blocks()) {
        for (Eigen::Index i = 0; i < s.y.size(); ++i) {
            out += s.id + "," + format_double(s.y(i));
            for (Eigen::Index j = 0; j < s.x.cols(); ++j) out += "," + format_double(s.x(i, j));
            out += "\n";
        }
    }
    return out;
}

void write_csv(const StratifiedDataset& data, const std::filesystem::path& path, const CsvSchema& schema)
{
    std::ofstream f(path, std::ios::binary);
    if (!f) throw SchemaError("cannot write '" + path.string() + "'");
    f << to_csv(data, schema);
}

} // namespace strata
