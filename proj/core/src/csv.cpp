#include "mipo/csv.hpp"

#include <charconv>
#include <stdexcept>

namespace mipo::csv {

std::string format(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw std::runtime_error("csv: cannot format value");
    return std::string(buf, ptr);
}

std::string format(std::int64_t v) {
    char buf[24];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw std::runtime_error("csv: cannot format value");
    return std::string(buf, ptr);
}

Writer::Writer(const std::filesystem::path& path, const std::vector<std::string>& header)
    : os_(path, std::ios::binary | std::ios::trunc), n_cols_(header.size()),
      path_(path.string()) {
    if (!os_) throw std::runtime_error("cannot open for writing: " + path_);
    row(header);
}

void Writer::row(const std::vector<std::string>& fields) {
    if (fields.size() != n_cols_)
        throw std::logic_error("csv: row width mismatch in " + path_);
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) os_ << ',';
        os_ << fields[i];
    }
    os_ << '\n';
}

void Writer::close() {
    os_.close();
    if (os_.fail()) throw std::runtime_error("failed writing " + path_);
}

}  // namespace mipo::csv
