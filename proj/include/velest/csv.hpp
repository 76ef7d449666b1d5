#pragma once

#include <string>
#include <vector>

namespace velest {

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    int column_index(const std::string& name) const;  // -1 if absent
};

// First column is conventionally time, written with 6 decimal places;
// remaining values use %.12g.
void write_csv(const std::string& path, const std::vector<std::string>& columns,
               const std::vector<std::vector<double>>& rows);

CsvTable read_csv(const std::string& path);

}  // namespace velest
