#include "distmt/serialization.hpp"

namespace distmt {

json to_json(const Vec<double>& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json to_json(const Mat<double>& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

Vec<double> vector_from_json(const json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected a JSON array for a vector");
  Vec<double> v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

Mat<double> matrix_from_json(const json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected a JSON array of rows for a matrix");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Mat<double> m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw std::invalid_argument("ragged matrix in JSON");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

json to_json(const PolicyStatsd& stats) {
  json theta = json::array();
  json lambda = json::array();
  for (const auto& t : stats.theta) theta.push_back(to_json(t));
  for (const auto& l : stats.lambda) lambda.push_back(to_json(l));
  return {{"theta", std::move(theta)}, {"lambda", std::move(lambda)}, {"beta", stats.beta}};
}

PolicyStatsd policy_stats_from_json(const json& j) {
  PolicyStatsd stats;
  for (const auto& t : j.at("theta")) stats.theta.push_back(vector_from_json(t));
  for (const auto& l : j.at("lambda")) stats.lambda.push_back(matrix_from_json(l));
  stats.beta = j.at("beta").get<double>();
  if (stats.theta.size() != stats.lambda.size())
    throw std::invalid_argument("policy stats: theta and lambda lengths differ");
  return stats;
}

}  // namespace distmt
