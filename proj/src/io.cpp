#include "tsrca/io.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tsrca {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

std::string strip(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& raw, std::size_t line_no, const std::string& column) {
    const std::string cell = strip(raw);
    if (cell.empty()) {
        throw std::runtime_error("csv: empty cell at line " + std::to_string(line_no) +
                                 ", column '" + column + "'");
    }
    try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        if (!std::isfinite(v)) {
            throw std::runtime_error("csv: non-finite value '" + cell + "' at line " +
                                     std::to_string(line_no) + ", column '" + column + "'");
        }
        return v;
    } catch (const std::runtime_error&) {
        throw;
    } catch (const std::exception&) {
        throw std::runtime_error("csv: non-numeric cell '" + cell + "' at line " +
                                 std::to_string(line_no) + ", column '" + column + "'");
    }
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

SeriesMatrix load_csv(const std::string& path, bool has_timestamp) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("csv: cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("csv: empty file '" + path + "'");
    std::vector<std::string> header = split_csv_line(line);
    for (auto& h : header) h = strip(h);
    if (header.empty()) throw std::runtime_error("csv: empty header in '" + path + "'");

    const std::size_t skip = has_timestamp ? 1 : 0;
    if (has_timestamp && header.size() < 2) {
        throw std::runtime_error("csv: timestamp file needs at least two columns");
    }

    SeriesMatrix series;
    series.sensor_names.assign(header.begin() + skip, header.end());
    const std::size_t d = series.sensor_names.size();

    std::vector<double> cells;
    std::size_t line_no = 1;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (strip(line).empty()) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != d + skip) {
            throw std::runtime_error("csv: line " + std::to_string(line_no) + " has " +
                                     std::to_string(fields.size()) + " fields, expected " +
                                     std::to_string(d + skip));
        }
        if (has_timestamp) {
            const double ts = parse_cell(fields[0], line_no, header[0]);
            series.timestamps.push_back(static_cast<std::int64_t>(std::llround(ts)));
        }
        for (std::size_t j = 0; j < d; ++j) {
            cells.push_back(parse_cell(fields[j + skip], line_no, series.sensor_names[j]));
        }
        ++rows;
    }
    if (rows == 0) throw std::runtime_error("csv: no data rows in '" + path + "'");

    series.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
    for (std::size_t t = 0; t < rows; ++t) {
        for (std::size_t j = 0; j < d; ++j) {
            series.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) =
                cells[t * d + j];
        }
    }
    series.validate();
    return series;
}

void save_csv(const SeriesMatrix& series, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("csv: cannot write '" + path + "'");
    const bool ts = !series.timestamps.empty();
    if (ts) out << "timestamp,";
    for (int j = 0; j < series.dim(); ++j) {
        out << series.sensor_names[j] << (j + 1 < series.dim() ? "," : "");
    }
    out << "\n";
    for (std::int64_t t = 0; t < series.length(); ++t) {
        if (ts) out << series.timestamps[t] << ",";
        for (int j = 0; j < series.dim(); ++j) {
            out << format_double(series.values(t, j)) << (j + 1 < series.dim() ? "," : "");
        }
        out << "\n";
    }
    if (!out) throw std::runtime_error("csv: write failed for '" + path + "'");
}

std::vector<AnomalyEvent> load_labels_json(const std::string& path, const SeriesMatrix& series) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("labels: cannot open '" + path + "'");
    nlohmann::json doc;
    in >> doc;
    if (!doc.is_array()) throw std::runtime_error("labels: expected a JSON array");

    std::vector<AnomalyEvent> events;
    for (const auto& item : doc) {
        AnomalyEvent ev;
        ev.onset = item.at("onset").get<std::int64_t>();
        ev.duration = item.at("duration").get<std::int64_t>();
        for (const auto& name : item.at("sensors")) {
            const int j = series.sensor_index(name.get<std::string>());
            if (j < 0) {
                throw std::runtime_error("labels: unknown sensor '" + name.get<std::string>() +
                                         "'");
            }
            ev.ground_truth.push_back(j);
        }
        std::sort(ev.ground_truth.begin(), ev.ground_truth.end());
        ev.ground_truth.erase(std::unique(ev.ground_truth.begin(), ev.ground_truth.end()),
                              ev.ground_truth.end());
        events.push_back(std::move(ev));
    }
    return events;
}

void save_labels_json(const std::vector<AnomalyEvent>& events, const SeriesMatrix& series,
                      const std::string& path) {
    nlohmann::json doc = nlohmann::json::array();
    for (const AnomalyEvent& ev : events) {
        nlohmann::json item;
        item["onset"] = ev.onset;
        item["duration"] = ev.duration;
        nlohmann::json names = nlohmann::json::array();
        for (int j : ev.ground_truth) names.push_back(series.sensor_names.at(j));
        item["sensors"] = names;
        doc.push_back(item);
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("labels: cannot write '" + path + "'");
    out << doc.dump(2) << "\n";
}

}  // namespace tsrca
