#pragma once

#include <json.hpp>

#include "distmt/lsvi.hpp"

namespace distmt {

using json = nlohmann::json;

json to_json(const Vec<double>& v);
json to_json(const Mat<double>& m);  // array of rows
Vec<double> vector_from_json(const json& j);
Mat<double> matrix_from_json(const json& j);

// {"theta": [[...]...], "lambda": [[[...]...]...], "beta": b}
json to_json(const PolicyStatsd& stats);
PolicyStatsd policy_stats_from_json(const json& j);

}  // namespace distmt
