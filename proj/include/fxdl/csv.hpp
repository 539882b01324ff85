#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fxdl/tensor.hpp"

namespace fxdl {

// Fixed-format numeric cell so identical runs serialize identical bytes.
inline std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::string csv_num(std::size_t v) { return std::to_string(v); }

// Append-oriented CSV writer with a fixed header written once per file.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header,
              bool append = false)
        : cols_(header.size()) {
        bool fresh = !append || !std::filesystem::exists(path) ||
                     std::filesystem::file_size(path) == 0;
        out_.open(path, append ? std::ios::app : std::ios::trunc);
        require(out_.good(), "CsvWriter: cannot open " + path.string());
        if (fresh) {
            for (std::size_t i = 0; i < header.size(); ++i)
                out_ << (i ? "," : "") << header[i];
            out_ << "\n";
        }
    }

    // Empty cells are legal; they mark columns not sampled this row.
    void row(const std::vector<std::string>& cells) {
        require(cells.size() == cols_, "CsvWriter: column count mismatch");
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << "\n";
    }

    void flush() { out_.flush(); }

private:
    std::ofstream out_;
    std::size_t cols_;
};

}  // namespace fxdl
