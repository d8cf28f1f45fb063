#include "nearfar/image_io.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "nearfar/errors.hpp"

namespace nearfar {

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& is, const std::filesystem::path& path) {
    std::string tok;
    int c;
    while ((c = is.get()) != EOF) {
        if (c == '#') {
            while ((c = is.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    if (tok.empty()) throw FormatError(path.string() + ": truncated header");
    return tok;
}

int parse_int(const std::string& tok, const std::filesystem::path& path, const char* field) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw FormatError(path.string() + ": bad " + field + " '" + tok + "'");
    }
}

}  // namespace

void write_pgm16(const Raster<std::uint16_t>& img, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os << "P5\n" << img.width() << ' ' << img.height() << "\n65535\n";
    std::vector<unsigned char> buf(img.size() * 2);
    auto v = img.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        buf[2 * i] = static_cast<unsigned char>(v[i] >> 8);
        buf[2 * i + 1] = static_cast<unsigned char>(v[i] & 0xFF);
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!os) throw IoError("failed writing: " + path.string());
}

Raster<std::uint16_t> read_pgm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    if (next_token(is, path) != "P5") throw FormatError(path.string() + ": not a binary PGM (P5)");
    const int w = parse_int(next_token(is, path), path, "width");
    const int h = parse_int(next_token(is, path), path, "height");
    const int maxval = parse_int(next_token(is, path), path, "maxval");
    if (w < 0 || h < 0 || maxval <= 0 || maxval > 65535) throw FormatError(path.string() + ": bad PGM header");
    const std::size_t bps = maxval < 256 ? 1 : 2;
    Raster<std::uint16_t> img(w, h);
    std::vector<unsigned char> buf(img.size() * bps);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(is.gcount()) != buf.size()) throw FormatError(path.string() + ": truncated pixel data");
    auto v = img.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = bps == 1 ? buf[i] : static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]);
    }
    return img;
}

void write_pfm(const Image& img, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os << "Pf\n" << img.width() << ' ' << img.height() << "\n-1.0\n";
    std::vector<unsigned char> buf(static_cast<std::size_t>(img.width()) * 4);
    for (int y = img.height() - 1; y >= 0; --y) {
        const auto row = img.row(y);
        for (std::size_t x = 0; x < row.size(); ++x) {
            const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(row[x]));
            for (int b = 0; b < 4; ++b) buf[4 * x + static_cast<std::size_t>(b)] = static_cast<unsigned char>(bits >> (8 * b));
        }
        os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
    if (!os) throw IoError("failed writing: " + path.string());
}

Image read_pfm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    if (next_token(is, path) != "Pf") throw FormatError(path.string() + ": not a greyscale PFM (Pf)");
    const int w = parse_int(next_token(is, path), path, "width");
    const int h = parse_int(next_token(is, path), path, "height");
    const std::string scale_tok = next_token(is, path);
    double scale = 0.0;
    try {
        scale = std::stod(scale_tok);
    } catch (const std::exception&) {
        throw FormatError(path.string() + ": bad scale '" + scale_tok + "'");
    }
    if (w < 0 || h < 0 || scale == 0.0) throw FormatError(path.string() + ": bad PFM header");
    const bool little = scale < 0.0;
    Image img(w, h);
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * 4);
    for (int y = h - 1; y >= 0; --y) {
        is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (static_cast<std::size_t>(is.gcount()) != buf.size()) throw FormatError(path.string() + ": truncated pixel data");
        auto row = img.row(y);
        for (std::size_t x = 0; x < row.size(); ++x) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) {
                const int shift = little ? 8 * b : 8 * (3 - b);
                bits |= static_cast<std::uint32_t>(buf[4 * x + static_cast<std::size_t>(b)]) << shift;
            }
            row[x] = static_cast<double>(std::bit_cast<float>(bits));
        }
    }
    return img;
}

}  // namespace nearfar
