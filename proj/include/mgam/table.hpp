#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <string>
#include <vector>

namespace mgam {

// Columnar numeric table keyed by header name. This is the exchange type
// between CSV files, the simulator and the model-matrix assembly.
class DataTable {
  public:
    DataTable() = default;

    Eigen::Index rows() const { return cols_.empty() ? 0 : cols_[0].size(); }
    Eigen::Index columns() const { return static_cast<Eigen::Index>(cols_.size()); }

    bool has(const std::string& name) const;
    const Eigen::VectorXd& col(const std::string& name) const; // throws if absent
    const std::vector<std::string>& names() const { return names_; }

    void add(std::string name, Eigen::VectorXd values); // throws on dup/ragged

  private:
    std::vector<std::string> names_;
    std::vector<Eigen::VectorXd> cols_;
};

// RFC-4180-style reader: header row required, quoted fields allowed, every
// field must parse as a finite double. Errors carry 1-based line numbers.
DataTable read_csv(const std::string& path);
DataTable read_csv(std::istream& in, const std::string& origin);

// LF line endings, shortest round-trip double formatting, stable column order.
void write_csv(const std::string& path, const DataTable& table);
void write_csv(std::ostream& out, const DataTable& table);

// Shortest representation that parses back to the same double (std::to_chars).
std::string format_double(double v);

} // namespace mgam
