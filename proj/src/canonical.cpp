#include "mmeval/canonical.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

#include "mmeval/error.hpp"

namespace mmeval {

namespace {

void write_string(std::string& out, const std::string& s) {
    out.push_back('"');
    for (unsigned char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\b': out += "\\b"; break;
            case '\f': out += "\\f"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (c < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", c);
                    out += buf;
                } else {
                    out.push_back(static_cast<char>(c));
                }
        }
    }
    out.push_back('"');
}

template <typename T>
void write_number(std::string& out, T v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, end);
}

void write_value(std::string& out, const Json& v) {
    switch (v.type()) {
        case Json::value_t::null: out += "null"; break;
        case Json::value_t::boolean: out += v.get<bool>() ? "true" : "false"; break;
        case Json::value_t::number_integer: write_number(out, v.get<std::int64_t>()); break;
        case Json::value_t::number_unsigned: write_number(out, v.get<std::uint64_t>()); break;
        case Json::value_t::number_float: {
            double d = v.get<double>();
            if (!std::isfinite(d)) {
                throw EvalError(ErrorCode::MALFORMED_PAYLOAD, "non-finite number in payload");
            }
            if (d == 0.0) d = 0.0;  // folds -0
            write_number(out, d);
            break;
        }
        case Json::value_t::string: write_string(out, v.get_ref<const std::string&>()); break;
        case Json::value_t::array: {
            out.push_back('[');
            bool first = true;
            for (const auto& item : v) {
                if (!first) out.push_back(',');
                first = false;
                write_value(out, item);
            }
            out.push_back(']');
            break;
        }
        case Json::value_t::object: {
            // nlohmann::json keeps object members in a std::map, so iteration
            // is already in byte-wise key order.
            out.push_back('{');
            bool first = true;
            for (auto it = v.begin(); it != v.end(); ++it) {
                if (!first) out.push_back(',');
                first = false;
                write_string(out, it.key());
                out.push_back(':');
                write_value(out, it.value());
            }
            out.push_back('}');
            break;
        }
        default:
            throw EvalError(ErrorCode::MALFORMED_PAYLOAD, "unsupported value type");
    }
}

}  // namespace

std::string canonicalize(const Json& value) {
    std::string out;
    write_value(out, value);
    return out;
}

Json parse_json(std::string_view text) {
    try {
        return Json::parse(text.begin(), text.end());
    } catch (const Json::parse_error& e) {
        throw EvalError(ErrorCode::MALFORMED_PAYLOAD, std::string("invalid JSON: ") + e.what());
    }
}

}  // namespace mmeval
