#pragma once

#include <cstddef>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "attrirob/errors.hpp"
#include "attrirob/mlp.hpp"
#include "attrirob/training.hpp"

namespace attrirob {

using json = nlohmann::json;

inline json json_from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw config_error("invalid JSON in " + path + ": " + e.what());
    }
    return j;
}

inline void json_to_file(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write file: " + path);
    out << j.dump(2) << '\n';
    if (!out) throw io_error("write failed: " + path);
}

inline void save_checkpoint(const MlpModel& model, const std::string& path,
                            const json& meta = json::object()) {
    json layers = json::array();
    for (const auto& l : model.layers) {
        json w = json::array();
        for (std::size_t r = 0; r < l.out_dim(); ++r) {
            json row = json::array();
            for (std::size_t c = 0; c < l.in_dim(); ++c) row.push_back(l.w.at(r, c));
            w.push_back(std::move(row));
        }
        layers.push_back(json{{"w", std::move(w)}, {"b", l.b}});
    }
    json_to_file(json{{"layers", std::move(layers)}, {"meta", meta}}, path);
}

inline MlpModel load_checkpoint(const std::string& path, json* meta = nullptr) {
    const json j = json_from_file(path);
    if (!j.is_object() || !j.contains("layers") || !j["layers"].is_array())
        throw config_error("checkpoint " + path + ": missing layers array");
    MlpModel m;
    for (const auto& lj : j["layers"]) {
        if (!lj.contains("w") || !lj.contains("b"))
            throw config_error("checkpoint " + path + ": layer missing w or b");
        const auto& wj = lj["w"];
        if (!wj.is_array() || wj.empty())
            throw config_error("checkpoint " + path + ": empty weight matrix");
        Layer l;
        const std::size_t rows = wj.size();
        const std::size_t cols = wj[0].size();
        l.w = Tensor(rows, cols);
        for (std::size_t r = 0; r < rows; ++r) {
            if (wj[r].size() != cols)
                throw config_error("checkpoint " + path + ": ragged weight matrix");
            for (std::size_t c = 0; c < cols; ++c) l.w.at(r, c) = wj[r][c].get<double>();
        }
        l.b = lj["b"].get<Vec>();
        m.layers.push_back(std::move(l));
    }
    m.validate();
    if (meta) *meta = j.value("meta", json::object());
    return m;
}

namespace detail {

// Shortest round-trip decimal for doubles keeps CSV bit-faithful.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) {
        for (int prec = 1; prec <= 16; ++prec) {
            char shorter[32];
            std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
            std::sscanf(shorter, "%lf", &back);
            if (back == v) return shorter;
        }
    }
    return buf;
}

}  // namespace detail

class CsvWriter {
  public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header)
        : out_(path), path_(path), columns_(header.size()) {
        if (!out_) throw io_error("cannot write file: " + path);
        for (std::size_t i = 0; i < header.size(); ++i)
            out_ << (i ? "," : "") << header[i];
        out_ << '\n';
    }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != columns_)
            throw argument_error("csv row width mismatch in " + path_);
        for (std::size_t i = 0; i < cells.size(); ++i)
            out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
        if (!out_) throw io_error("write failed: " + path_);
    }

    static std::string cell(double v) { return detail::format_double(v); }
    static std::string cell(std::size_t v) { return std::to_string(v); }
    static std::string cell(bool v) { return v ? "1" : "0"; }

  private:
    std::ofstream out_;
    std::string path_;
    std::size_t columns_;
};

inline void save_train_log(const TrainLog& log, const std::string& path) {
    CsvWriter csv(path, {"epoch", "loss_total", "loss_base", "loss_reg", "loss_igr",
                         "nat_acc", "adv_acc", "mean_ig_cos", "mean_consistency"});
    for (const auto& r : log.records)
        csv.row({CsvWriter::cell(r.epoch), CsvWriter::cell(r.loss_total),
                 CsvWriter::cell(r.loss_base), CsvWriter::cell(r.loss_reg),
                 CsvWriter::cell(r.loss_igr), CsvWriter::cell(r.nat_acc),
                 CsvWriter::cell(r.adv_acc), CsvWriter::cell(r.mean_ig_cos),
                 CsvWriter::cell(r.mean_consistency)});
}

}  // namespace attrirob
