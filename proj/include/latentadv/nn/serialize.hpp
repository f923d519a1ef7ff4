#pragma once

#include <json.hpp>

#include "latentadv/errors.hpp"
#include "latentadv/nn/tape.hpp"

namespace latentadv::nn {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json data = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ArtifactError("matrix blob has wrong element count");
  }
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j2 = 0; j2 < cols; ++j2) m(i, j2) = data[k++].get<double>();
  }
  return m;
}

inline nlohmann::json parameters_to_json(const std::vector<Parameter*>& params) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto* p : params) out.push_back(matrix_to_json(p->value));
  return out;
}

inline void parameters_from_json(const nlohmann::json& j, const std::vector<Parameter*>& params) {
  if (!j.is_array() || j.size() != params.size()) {
    throw ArtifactError("parameter blob does not match the model layout");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix m = matrix_from_json(j[i]);
    if (m.rows() != params[i]->value.rows() || m.cols() != params[i]->value.cols()) {
      throw ArtifactError("parameter " + std::to_string(i) + " has the wrong shape");
    }
    *params[i] = Parameter(std::move(m));
  }
}

}  // namespace latentadv::nn
