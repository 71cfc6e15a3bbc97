#pragma once

// JSON archives for parameters. Doubles are written with 17 significant
// digits, so a save/load cycle reproduces every tensor bit for bit.

#include "hyperload/autograd.hpp"
#include "hyperload/errors.hpp"
#include "hyperload/nn.hpp"

#include <json.hpp>

#include <fstream>
#include <string>

namespace hyperload {

using Json = nlohmann::json;

inline Json to_json(const Matrix& m) {
    Json data = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            data.push_back(m(i, j));
        }
    }
    return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline Matrix matrix_from_json(const Json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
        throw CheckpointError("tensor data length does not match its shape");
    }
    Matrix m(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j2 = 0; j2 < cols; ++j2) {
            m(i, j2) = data[k++].get<double>();
        }
    }
    return m;
}

inline Json save_parameters(const ParameterList& params) {
    Json out = Json::object();
    for (const auto* p : params) {
        out[p->name] = to_json(p->value);
    }
    return out;
}

/// Fills every parameter from the archive; names and shapes must match exactly.
inline void load_parameters(const ParameterList& params, const Json& archive) {
    if (archive.size() != params.size()) {
        throw CheckpointError("archive holds " + std::to_string(archive.size()) + " tensors, model expects " +
                              std::to_string(params.size()));
    }
    for (auto* p : params) {
        if (!archive.contains(p->name)) {
            throw CheckpointError("archive is missing tensor '" + p->name + "'");
        }
        Matrix m = matrix_from_json(archive.at(p->name));
        if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
            throw CheckpointError("tensor '" + p->name + "' has shape " + std::to_string(m.rows()) + "x" +
                                  std::to_string(m.cols()) + ", expected " + std::to_string(p->value.rows()) + "x" +
                                  std::to_string(p->value.cols()));
        }
        p->value = std::move(m);
        p->zero_grad();
    }
}

inline void write_json_file(const Json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write '" + path + "'");
    }
    out << j.dump();
    if (!out) {
        throw IoError("failed writing '" + path + "'");
    }
}

inline Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw CheckpointError("'" + path + "' is not valid JSON: " + e.what());
    }
}

inline void require_format(const Json& j, const std::string& tag) {
    if (!j.contains("format") || j.at("format") != tag) {
        throw CheckpointError("expected archive format '" + tag + "'");
    }
}

} // namespace hyperload
