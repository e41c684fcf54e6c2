#include "natadiff/checkpoint.hpp"

namespace natadiff::checkpoint {

using nlohmann::json;

json matrix_to_json(const Mat& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Mat matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ValidationError("checkpoint.matrix", "data length does not match shape");
  }
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

json mlp_to_json(const Mlp& mlp) {
  json layers = json::array();
  for (std::size_t l = 0; l < mlp.num_layers(); ++l) {
    layers.push_back({{"weight", matrix_to_json(mlp.weights[l])},
                      {"bias", matrix_to_json(mlp.biases[l])}});
  }
  return json{{"widths", mlp.widths()},
              {"activation", mlp.hidden_activation() == Activation::kTanh ? "tanh" : "identity"},
              {"layers", std::move(layers)}};
}

Mlp mlp_from_json(const json& j) {
  const auto widths = j.at("widths").get<std::vector<int>>();
  const auto act = j.at("activation").get<std::string>();
  if (act != "tanh" && act != "identity") {
    throw ValidationError("checkpoint.activation", "unknown activation '" + act + "'");
  }
  Mlp mlp(widths, act == "tanh" ? Activation::kTanh : Activation::kIdentity, nullptr);
  const auto& layers = j.at("layers");
  if (layers.size() != mlp.num_layers()) {
    throw ValidationError("checkpoint.layers", "layer count does not match widths");
  }
  for (std::size_t l = 0; l < mlp.num_layers(); ++l) {
    Mat w = matrix_from_json(layers[l].at("weight"));
    Mat b = matrix_from_json(layers[l].at("bias"));
    if (w.rows() != mlp.weights[l].rows() || w.cols() != mlp.weights[l].cols() ||
        b.rows() != mlp.biases[l].rows() || b.cols() != 1) {
      throw ValidationError("checkpoint.layers", "layer shape does not match widths");
    }
    mlp.weights[l] = std::move(w);
    mlp.biases[l] = b.col(0);
  }
  return mlp;
}

json header(const std::string& kind) {
  return json{{"format", kFormat}, {"version", kVersion}, {"kind", kind}};
}

void check_header(const json& j, const std::string& kind) {
  if (!j.is_object() || j.value("format", "") != kFormat) {
    throw ValidationError("checkpoint.format", "not a natadiff checkpoint");
  }
  if (j.value("version", 0) != kVersion) {
    throw ValidationError("checkpoint.version", "unsupported version");
  }
  if (j.value("kind", "") != kind) {
    throw ValidationError("checkpoint.kind",
                          "expected '" + kind + "', found '" + j.value("kind", "") + "'");
  }
}

}  // namespace natadiff::checkpoint
