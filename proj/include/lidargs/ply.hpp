// Copyright Contributors to the lidargs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lidargs/common.hpp"

#include <bit>
#include <cctype>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>

namespace lidargs::ply {

enum class Type { kInt8, kUInt8, kInt16, kUInt16, kInt32, kUInt32, kFloat32, kFloat64 };
enum class Format { kAscii, kBinaryLittleEndian };

inline std::size_t type_size(Type t) {
    switch (t) {
        case Type::kInt8:
        case Type::kUInt8: return 1;
        case Type::kInt16:
        case Type::kUInt16: return 2;
        case Type::kInt32:
        case Type::kUInt32:
        case Type::kFloat32: return 4;
        case Type::kFloat64: return 8;
    }
    return 0;
}

inline std::string_view type_name(Type t) {
    switch (t) {
        case Type::kInt8: return "char";
        case Type::kUInt8: return "uchar";
        case Type::kInt16: return "short";
        case Type::kUInt16: return "ushort";
        case Type::kInt32: return "int";
        case Type::kUInt32: return "uint";
        case Type::kFloat32: return "float";
        case Type::kFloat64: return "double";
    }
    return "";
}

inline std::optional<Type> parse_type(std::string_view s) {
    if (s == "char" || s == "int8") return Type::kInt8;
    if (s == "uchar" || s == "uint8") return Type::kUInt8;
    if (s == "short" || s == "int16") return Type::kInt16;
    if (s == "ushort" || s == "uint16") return Type::kUInt16;
    if (s == "int" || s == "int32") return Type::kInt32;
    if (s == "uint" || s == "uint32") return Type::kUInt32;
    if (s == "float" || s == "float32") return Type::kFloat32;
    if (s == "double" || s == "float64") return Type::kFloat64;
    return std::nullopt;
}

struct Property {
    std::string name;
    Type type = Type::kFloat32;
    bool is_list = false;
    Type count_type = Type::kUInt8;
};

struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<Property> properties;
};

struct Header {
    Format format = Format::kAscii;
    std::vector<Element> elements;
};

/// Scalar vertex properties, each widened to double, in file order.
struct VertexTable {
    std::size_t count = 0;
    std::vector<std::string> names;
    std::vector<Type> types;
    std::vector<std::vector<double>> columns;

    const std::vector<double>* find(std::string_view name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return &columns[i];
        return nullptr;
    }
    std::optional<Type> type_of(std::string_view name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return types[i];
        return std::nullopt;
    }
};

struct Column {
    std::string name;
    Type type = Type::kFloat32;
    std::vector<double> values;
};

namespace detail {

[[noreturn]] inline void fail(const std::filesystem::path& path, const std::string& what) {
    throw Error(ErrorCode::kParse, path.string() + ": " + what);
}

template <class T>
double load_le(const unsigned char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return static_cast<double>(v);
}

inline double decode(Type t, const unsigned char* p) {
    static_assert(std::endian::native == std::endian::little, "binary PLY decoding assumes a little-endian host");
    switch (t) {
        case Type::kInt8: return load_le<std::int8_t>(p);
        case Type::kUInt8: return load_le<std::uint8_t>(p);
        case Type::kInt16: return load_le<std::int16_t>(p);
        case Type::kUInt16: return load_le<std::uint16_t>(p);
        case Type::kInt32: return load_le<std::int32_t>(p);
        case Type::kUInt32: return load_le<std::uint32_t>(p);
        case Type::kFloat32: return load_le<float>(p);
        case Type::kFloat64: return load_le<double>(p);
    }
    return 0.0;
}

template <class T>
void store_le(std::string& out, double v) {
    const T x = static_cast<T>(v);
    char buf[sizeof(T)];
    std::memcpy(buf, &x, sizeof(T));
    out.append(buf, sizeof(T));
}

inline void encode(Type t, double v, std::string& out) {
    switch (t) {
        case Type::kInt8: store_le<std::int8_t>(out, v); break;
        case Type::kUInt8: store_le<std::uint8_t>(out, v); break;
        case Type::kInt16: store_le<std::int16_t>(out, v); break;
        case Type::kUInt16: store_le<std::uint16_t>(out, v); break;
        case Type::kInt32: store_le<std::int32_t>(out, v); break;
        case Type::kUInt32: store_le<std::uint32_t>(out, v); break;
        case Type::kFloat32: store_le<float>(out, v); break;
        case Type::kFloat64: store_le<double>(out, v); break;
    }
}

inline void append_ascii(Type t, double v, std::string& out) {
    char buf[64];
    std::to_chars_result r;
    if (t == Type::kFloat32) {
        r = std::to_chars(buf, buf + sizeof(buf), static_cast<float>(v));
    } else if (t == Type::kFloat64) {
        r = std::to_chars(buf, buf + sizeof(buf), v);
    } else {
        r = std::to_chars(buf, buf + sizeof(buf), static_cast<long long>(v));
    }
    out.append(buf, r.ptr);
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        const std::size_t b = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > b) out.push_back(line.substr(b, i - b));
    }
    return out;
}

/// Parses the header and returns it together with the byte offset of the body.
inline std::pair<Header, std::size_t> parse_header(const std::string& data, const std::filesystem::path& path) {
    Header h;
    std::size_t pos = 0;
    bool saw_format = false;
    bool first = true;
    while (true) {
        const std::size_t eol = data.find('\n', pos);
        if (eol == std::string::npos) fail(path, "malformed header: missing end_header");
        std::string_view line(data.data() + pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos = eol + 1;
        const auto tok = split_ws(line);
        if (first) {
            if (tok.size() != 1 || tok[0] != "ply") fail(path, "malformed header: missing 'ply' magic");
            first = false;
            continue;
        }
        if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
        if (tok[0] == "end_header") break;
        if (tok[0] == "format") {
            if (tok.size() < 2) fail(path, "malformed header: bad format line");
            if (tok[1] == "ascii") {
                h.format = Format::kAscii;
            } else if (tok[1] == "binary_little_endian") {
                h.format = Format::kBinaryLittleEndian;
            } else if (tok[1] == "binary_big_endian") {
                fail(path, "unsupported endianness: binary_big_endian");
            } else {
                fail(path, "malformed header: unknown format '" + std::string(tok[1]) + "'");
            }
            saw_format = true;
        } else if (tok[0] == "element") {
            if (tok.size() != 3) fail(path, "malformed header: bad element line");
            Element e;
            e.name = std::string(tok[1]);
            std::size_t n = 0;
            const auto r = std::from_chars(tok[2].data(), tok[2].data() + tok[2].size(), n);
            if (r.ec != std::errc{} || r.ptr != tok[2].data() + tok[2].size())
                fail(path, "malformed header: bad element count for '" + e.name + "'");
            e.count = n;
            h.elements.push_back(std::move(e));
        } else if (tok[0] == "property") {
            if (h.elements.empty()) fail(path, "malformed header: property before element");
            Property p;
            if (tok.size() == 5 && tok[1] == "list") {
                const auto ct = parse_type(tok[2]);
                const auto it = parse_type(tok[3]);
                if (!ct || !it) fail(path, "malformed header: bad list property types");
                p.is_list = true;
                p.count_type = *ct;
                p.type = *it;
                p.name = std::string(tok[4]);
            } else if (tok.size() == 3) {
                const auto t = parse_type(tok[1]);
                if (!t) fail(path, "malformed header: unknown property type '" + std::string(tok[1]) + "'");
                p.type = *t;
                p.name = std::string(tok[2]);
            } else {
                fail(path, "malformed header: bad property line");
            }
            h.elements.back().properties.push_back(std::move(p));
        } else {
            fail(path, "malformed header: unexpected keyword '" + std::string(tok[0]) + "'");
        }
    }
    if (!saw_format) fail(path, "malformed header: missing format line");
    return {h, pos};
}

}  // namespace detail

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot open file: " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Reads the scalar properties of the `vertex` element. Other elements are
/// skipped; list properties are supported only outside `vertex`.
inline VertexTable read_vertices(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::kIo, "file not found: " + path.string());
    const std::string data = read_file_bytes(path);
    const auto [header, body] = detail::parse_header(data, path);

    const Element* vertex = nullptr;
    for (const auto& e : header.elements)
        if (e.name == "vertex") vertex = &e;
    if (!vertex) detail::fail(path, "malformed header: no vertex element");

    VertexTable table;
    table.count = vertex->count;
    for (const auto& p : vertex->properties) {
        if (p.is_list) detail::fail(path, "list property '" + p.name + "' in vertex element is not supported");
        table.names.push_back(p.name);
        table.types.push_back(p.type);
        table.columns.emplace_back(vertex->count);
    }

    if (header.format == Format::kBinaryLittleEndian) {
        std::size_t pos = body;
        auto need = [&](std::size_t n, const std::string& where) {
            if (pos + n > data.size()) detail::fail(path, "unexpected end of data in " + where);
        };
        for (const auto& e : header.elements) {
            if (&e == vertex) {
                for (std::size_t i = 0; i < e.count; ++i) {
                    for (std::size_t j = 0; j < e.properties.size(); ++j) {
                        const std::size_t sz = type_size(e.properties[j].type);
                        need(sz, "vertex " + std::to_string(i));
                        table.columns[j][i] =
                            detail::decode(e.properties[j].type, reinterpret_cast<const unsigned char*>(data.data() + pos));
                        pos += sz;
                    }
                }
                break;
            }
            for (std::size_t i = 0; i < e.count; ++i) {
                for (const auto& p : e.properties) {
                    if (p.is_list) {
                        const std::size_t csz = type_size(p.count_type);
                        need(csz, "element " + e.name);
                        const auto n = static_cast<std::size_t>(
                            detail::decode(p.count_type, reinterpret_cast<const unsigned char*>(data.data() + pos)));
                        pos += csz;
                        need(n * type_size(p.type), "element " + e.name);
                        pos += n * type_size(p.type);
                    } else {
                        need(type_size(p.type), "element " + e.name);
                        pos += type_size(p.type);
                    }
                }
            }
        }
    } else {
        std::size_t pos = body;
        auto next_line = [&](const std::string& where) -> std::string_view {
            while (true) {
                if (pos >= data.size()) detail::fail(path, "unexpected end of data in " + where);
                std::size_t eol = data.find('\n', pos);
                if (eol == std::string::npos) eol = data.size();
                std::string_view line(data.data() + pos, eol - pos);
                pos = eol + 1;
                if (!detail::split_ws(line).empty()) return line;
            }
        };
        for (const auto& e : header.elements) {
            if (&e == vertex) {
                for (std::size_t i = 0; i < e.count; ++i) {
                    const std::string where = "vertex " + std::to_string(i);
                    const auto tok = detail::split_ws(next_line(where));
                    if (tok.size() < e.properties.size()) detail::fail(path, "too few values in " + where);
                    for (std::size_t j = 0; j < e.properties.size(); ++j) {
                        double v = 0.0;
                        const auto r = std::from_chars(tok[j].data(), tok[j].data() + tok[j].size(), v);
                        if (r.ec != std::errc{} || r.ptr != tok[j].data() + tok[j].size()) {
                            // from_chars rejects "inf"/"nan" spellings some writers emit; treat them as values
                            // so the finiteness check reports the vertex.
                            const std::string t(tok[j]);
                            if (t == "nan" || t == "-nan" || t == "NaN") {
                                v = std::numeric_limits<double>::quiet_NaN();
                            } else if (t == "inf" || t == "Inf") {
                                v = std::numeric_limits<double>::infinity();
                            } else if (t == "-inf" || t == "-Inf") {
                                v = -std::numeric_limits<double>::infinity();
                            } else {
                                detail::fail(path, "bad value '" + t + "' for property '" + e.properties[j].name +
                                                       "' in " + where);
                            }
                        }
                        // Match what a binary file would hold for this property type.
                        if (e.properties[j].type == Type::kFloat32) v = static_cast<float>(v);
                        table.columns[j][i] = v;
                    }
                }
                break;
            }
            for (std::size_t i = 0; i < e.count; ++i) next_line("element " + e.name);
        }
    }
    return table;
}

/// Writes a single `vertex` element.
inline void write_vertices(const std::filesystem::path& path, std::size_t count, const std::vector<Column>& columns,
                           Format format = Format::kBinaryLittleEndian) {
    for (const auto& c : columns)
        require(c.values.size() == count, ErrorCode::kInvalidArgument,
                "column '" + c.name + "' has " + std::to_string(c.values.size()) + " values, expected " +
                    std::to_string(count));
    std::string out;
    out += "ply\n";
    out += format == Format::kAscii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n";
    out += "element vertex " + std::to_string(count) + "\n";
    for (const auto& c : columns) {
        out += "property ";
        out += type_name(c.type);
        out += " " + c.name + "\n";
    }
    out += "end_header\n";
    out.reserve(out.size() + count * columns.size() * 8);
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t j = 0; j < columns.size(); ++j) {
            if (format == Format::kAscii) {
                if (j) out += ' ';
                detail::append_ascii(columns[j].type, columns[j].values[i], out);
            } else {
                detail::encode(columns[j].type, columns[j].values[i], out);
            }
        }
        if (format == Format::kAscii) out += '\n';
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::kIo, "cannot write file: " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

}  // namespace lidargs::ply
