#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace mipo::csv {

// Shortest round-trip representation via std::to_chars: full precision,
// '.' decimal separator, locale-independent.
std::string format(double v);
std::string format(std::int64_t v);

// Fixed header, fixed column order, '\n' line endings.
class Writer {
public:
    Writer(const std::filesystem::path& path, const std::vector<std::string>& header);
    void row(const std::vector<std::string>& fields);
    void close();

private:
    std::ofstream os_;
    std::size_t n_cols_;
    std::string path_;
};

}  // namespace mipo::csv
