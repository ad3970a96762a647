#include "mgam/table.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mgam {

bool DataTable::has(const std::string& name) const {
    for (const auto& n : names_)
        if (n == name) return true;
    return false;
}

const Eigen::VectorXd& DataTable::col(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return cols_[i];
    throw std::invalid_argument("no such column: '" + name + "'");
}

void DataTable::add(std::string name, Eigen::VectorXd values) {
    if (has(name)) throw std::invalid_argument("duplicate column: '" + name + "'");
    if (!cols_.empty() && values.size() != rows())
        throw std::invalid_argument("column '" + name + "' has mismatched length");
    names_.push_back(std::move(name));
    cols_.push_back(std::move(values));
}

namespace {

// Split one CSV record; supports quoted fields with "" escapes.
std::vector<std::string> split_record(const std::string& line, const std::string& origin,
                                      long line_no) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') { field += '"'; ++i; }
                else quoted = false;
            } else field += ch;
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(field);
            field.clear();
        } else if (ch != '\r') {
            field += ch;
        }
    }
    if (quoted)
        throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                    ": unterminated quoted field");
    out.push_back(field);
    return out;
}

double parse_field(const std::string& s, const std::string& origin, long line_no) {
    const char* b = s.data();
    const char* e = b + s.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    while (e > b && (e[-1] == ' ' || e[-1] == '\t')) --e;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e || !std::isfinite(v))
        throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                    ": field '" + s + "' is not a finite number");
    return v;
}

} // namespace

DataTable read_csv(std::istream& in, const std::string& origin) {
    std::string line;
    if (!std::getline(in, line))
        throw std::invalid_argument(origin + ": empty file (no header)");
    const auto header = split_record(line, origin, 1);
    std::vector<std::vector<double>> data(header.size());

    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_record(line, origin, line_no);
        if (fields.size() != header.size())
            throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                        ": expected " + std::to_string(header.size()) +
                                        " fields, got " + std::to_string(fields.size()));
        for (std::size_t j = 0; j < fields.size(); ++j)
            data[j].push_back(parse_field(fields[j], origin, line_no));
    }

    DataTable t;
    for (std::size_t j = 0; j < header.size(); ++j)
        t.add(header[j], Eigen::Map<const Eigen::VectorXd>(data[j].data(),
              static_cast<Eigen::Index>(data[j].size())));
    return t;
}

DataTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open '" + path + "'");
    return read_csv(in, path);
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::runtime_error("format_double failed");
    return std::string(buf, ptr);
}

void write_csv(std::ostream& out, const DataTable& table) {
    const auto& names = table.names();
    for (std::size_t j = 0; j < names.size(); ++j) {
        if (j) out << ',';
        out << names[j];
    }
    out << '\n';
    for (Eigen::Index i = 0; i < table.rows(); ++i) {
        for (std::size_t j = 0; j < names.size(); ++j) {
            if (j) out << ',';
            out << format_double(table.col(names[j])[i]);
        }
        out << '\n';
    }
}

void write_csv(const std::string& path, const DataTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    write_csv(out, table);
}

} // namespace mgam
