#pragma once

// CSV time-series table: a header naming a leading integer time-index column
// plus one column per variable. Missing cells are empty or the literal "NaN".

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gapcast {

struct CsvTable {
    std::vector<std::string> variable_names;        // d names, index column excluded
    std::vector<std::vector<double>> values;        // rows x d, missing cells hold 0
    std::vector<std::vector<uint8_t>> observed;     // rows x d
    int64_t rows() const { return static_cast<int64_t>(values.size()); }
    int64_t cols() const { return static_cast<int64_t>(variable_names.size()); }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    return cells;
}

inline std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open csv file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    auto header = detail::split_csv_line(line);
    if (header.size() < 2)
        throw std::runtime_error(path + ": header must name a time-index column plus variables");

    CsvTable table;
    for (size_t i = 1; i < header.size(); ++i) table.variable_names.push_back(detail::trim(header[i]));

    size_t row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw std::runtime_error(path + ": row " + std::to_string(row_no) + " has " +
                                     std::to_string(cells.size()) + " cells, expected " +
                                     std::to_string(header.size()));
        std::vector<double> vals(table.variable_names.size(), 0.0);
        std::vector<uint8_t> obs(table.variable_names.size(), 0);
        for (size_t c = 1; c < cells.size(); ++c) {
            std::string cell = detail::trim(cells[c]);
            if (cell.empty() || cell == "NaN" || cell == "nan") continue;
            size_t pos = 0;
            double v;
            try {
                v = std::stod(cell, &pos);
            } catch (const std::exception&) {
                pos = 0;
            }
            if (pos != cell.size() || !std::isfinite(v))
                throw std::runtime_error(path + ": row " + std::to_string(row_no) + ", column \"" +
                                         table.variable_names[c - 1] + "\": non-numeric cell \"" +
                                         cell + "\"");
            vals[c - 1] = v;
            obs[c - 1] = 1;
        }
        table.values.push_back(std::move(vals));
        table.observed.push_back(std::move(obs));
    }
    return table;
}

inline void write_csv(const std::string& path, const CsvTable& table) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write csv file: " + path);
    out << "t";
    for (const auto& name : table.variable_names) out << ',' << name;
    out << '\n';
    out.precision(17);
    for (int64_t r = 0; r < table.rows(); ++r) {
        out << r;
        for (int64_t c = 0; c < table.cols(); ++c) {
            out << ',';
            if (table.observed[static_cast<size_t>(r)][static_cast<size_t>(c)])
                out << table.values[static_cast<size_t>(r)][static_cast<size_t>(c)];
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("failed writing csv file: " + path);
}

}  // namespace gapcast
