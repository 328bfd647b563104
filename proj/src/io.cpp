#include "debias/io.hpp"

#include "debias/errors.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

namespace debias {

std::string format_double(double value) {
    // Try increasing precision until the rendering round-trips; 17 digits
    // always suffice for IEEE doubles.
    char buf[64];
    for (int precision = 1; precision <= 17; ++precision) {
        const int len = std::snprintf(buf, sizeof(buf), "%.*g", precision, value);
        double parsed = 0.0;
        const auto result = std::from_chars(buf, buf + len, parsed);
        if (result.ec == std::errc() && parsed == value) {
            return std::string(buf, static_cast<std::size_t>(len));
        }
    }
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open '" + tmp.string() + "' for writing");
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) {
            throw IoError("write failed for '" + tmp.string() + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("rename '" + tmp.string() + "' -> '" + path.string() +
                      "' failed: " + ec.message());
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace debias
