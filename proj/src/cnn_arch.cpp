#include "mcml/cnn_arch.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace mcml {

const std::vector<int> kDenseDims = {16, 32, 64};
const std::vector<int> kConvDims = {4, 6, 8, 10, 12, 16, 32, 64};
const std::vector<int> kConvKernels = {1, 3, 5};
const std::vector<int> kDepthwiseKernels = {3, 5};

const std::vector<std::string>& serial_patterns() {
    static const std::vector<std::string> patterns = {
        "A,C,C,C,M,Dr,D*", "A,C,M,D,Dr,D*",   "A,C,D,Dr,D*",    "A,C,M,C,Dr,D*",
        "A,C,C,M,Dr,D*",   "A,C,C,Dr,D*",     "A,D,D,D,Dr,D*",  "A,C,M,C,D,Dr,D*",
        "A,C,D,D,Dr,D*",   "A,C,M,D,D,D*",    "A,C,C,M,D,D*",   "A,C,C,D,D*",
        "A,C,M,C,C,Dr,D*", "A,C,C,M,C,Dr,D*", "A,D,D,Dr,D*",    "A,C,C,C,Dr,D*",
    };
    return patterns;
}

bool is_conv(LayerKind k) { return k == LayerKind::Conv || k == LayerKind::DepthwiseConv; }
bool is_dense(LayerKind k) { return k == LayerKind::DenseReLU || k == LayerKind::DenseLinear; }

namespace {

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(ch))) {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

void expand_slot(const std::vector<std::string>& tokens, std::size_t pos, ArchSpec& cur,
                 std::vector<ArchSpec>& out) {
    if (pos == tokens.size()) {
        out.push_back(cur);
        return;
    }
    const std::string& t = tokens[pos];
    auto emit = [&](LayerSpec spec) {
        cur.layers.push_back(spec);
        expand_slot(tokens, pos + 1, cur, out);
        cur.layers.pop_back();
    };
    if (t == "A") {
        emit({LayerKind::AvgPool, 0, 0});
    } else if (t == "M") {
        emit({LayerKind::MaxPool, 0, 0});
    } else if (t == "Dr") {
        emit({LayerKind::Dropout, 0, 0});
    } else if (t == "D*") {
        emit({LayerKind::DenseLinear, kNumClasses, 0});
    } else if (t == "D") {
        for (int d : kDenseDims) emit({LayerKind::DenseReLU, d, 0});
    } else if (t == "C") {
        for (int d : kConvDims)
            for (int k : kConvKernels) emit({LayerKind::Conv, d, k});
        for (int d : kConvDims)
            for (int k : kDepthwiseKernels) emit({LayerKind::DepthwiseConv, d, k});
    } else {
        MCML_CHECK(false, "unknown pattern token: " + t);
    }
}

} // namespace

std::vector<ArchSpec> enumerate_models() {
    std::vector<ArchSpec> out;
    ArchSpec cur;
    for (const std::string& pattern : serial_patterns())
        expand_slot(split_commas(pattern), 0, cur, out);
    // Patterns are distinct so this is a safeguard only.
    std::set<std::string> seen;
    std::vector<ArchSpec> dedup;
    dedup.reserve(out.size());
    for (ArchSpec& a : out) {
        std::string key = print_arch(a);
        if (seen.insert(key).second) dedup.push_back(std::move(a));
    }
    return dedup;
}

std::string print_arch(const ArchSpec& arch) {
    std::string out;
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
        if (i) out += ",";
        const LayerSpec& l = arch.layers[i];
        switch (l.kind) {
        case LayerKind::AvgPool: out += "A"; break;
        case LayerKind::MaxPool: out += "M"; break;
        case LayerKind::Dropout: out += "Dr"; break;
        case LayerKind::DenseLinear: out += "D*"; break;
        case LayerKind::DenseReLU:
            out += "D(" + std::to_string(l.output_dim) + ")";
            break;
        case LayerKind::Conv:
            out += "C1(" + std::to_string(l.output_dim) + "," + std::to_string(l.kernel) + ")";
            break;
        case LayerKind::DepthwiseConv:
            out += "C2(" + std::to_string(l.output_dim) + "," + std::to_string(l.kernel) + ")";
            break;
        }
    }
    return out;
}

ArchSpec parse_arch(const std::string& text) {
    ArchSpec arch;
    std::size_t i = 0;
    auto skip_ws = [&] {
        while (i < text.size() && (std::isspace(static_cast<unsigned char>(text[i])) != 0)) ++i;
    };
    auto parse_int = [&]() -> int {
        skip_ws();
        std::size_t start = i;
        while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])) != 0) ++i;
        MCML_CHECK(i > start, "expected integer in arch text at position " + std::to_string(start));
        return std::stoi(text.substr(start, i - start));
    };
    auto expect = [&](char c) {
        skip_ws();
        MCML_CHECK(i < text.size() && text[i] == c,
                   std::string("expected '") + c + "' in arch text");
        ++i;
    };
    while (true) {
        skip_ws();
        MCML_CHECK(i < text.size(), "unexpected end of arch text");
        char c = text[i];
        if (c == 'A') {
            ++i;
            arch.layers.push_back({LayerKind::AvgPool, 0, 0});
        } else if (c == 'M') {
            ++i;
            arch.layers.push_back({LayerKind::MaxPool, 0, 0});
        } else if (c == 'D') {
            ++i;
            if (i < text.size() && text[i] == 'r') {
                ++i;
                arch.layers.push_back({LayerKind::Dropout, 0, 0});
            } else if (i < text.size() && text[i] == '*') {
                ++i;
                arch.layers.push_back({LayerKind::DenseLinear, kNumClasses, 0});
            } else {
                expect('(');
                int d = parse_int();
                expect(')');
                arch.layers.push_back({LayerKind::DenseReLU, d, 0});
            }
        } else if (c == 'C') {
            ++i;
            MCML_CHECK(i < text.size() && (text[i] == '1' || text[i] == '2'),
                       "expected C1 or C2 in arch text");
            bool depthwise = text[i] == '2';
            ++i;
            expect('(');
            int d = parse_int();
            expect(',');
            int k = parse_int();
            expect(')');
            arch.layers.push_back(
                {depthwise ? LayerKind::DepthwiseConv : LayerKind::Conv, d, k});
        } else {
            MCML_CHECK(false, std::string("unexpected character in arch text: ") + c);
        }
        skip_ws();
        if (i == text.size()) break;
        expect(',');
    }
    return arch;
}

std::vector<Shape3> shape_chain(const ArchSpec& arch) {
    std::vector<Shape3> shapes;
    Shape3 s{kImageHeight, kImageWidth, kImageChannels};
    shapes.push_back(s);
    bool flattened = false;
    for (const LayerSpec& l : arch.layers) {
        switch (l.kind) {
        case LayerKind::AvgPool:
        case LayerKind::MaxPool:
            MCML_CHECK(!flattened, "pool after flatten");
            MCML_CHECK(s.h >= 2 && s.w >= 2, "pool on degenerate shape");
            s.h /= 2;
            s.w /= 2;
            break;
        case LayerKind::Conv:
            MCML_CHECK(!flattened, "conv after flatten");
            MCML_CHECK(s.h >= l.kernel && s.w >= l.kernel, "kernel exceeds feature map");
            s.h -= l.kernel - 1;
            s.w -= l.kernel - 1;
            s.c = l.output_dim;
            break;
        case LayerKind::DepthwiseConv:
            MCML_CHECK(!flattened, "conv after flatten");
            MCML_CHECK(s.h >= l.kernel && s.w >= l.kernel, "kernel exceeds feature map");
            s.h -= l.kernel - 1;
            s.w -= l.kernel - 1;
            // multiplier 1: channels carry through
            break;
        case LayerKind::DenseReLU:
        case LayerKind::DenseLinear: {
            int in = static_cast<int>(s.elems());
            s = {1, 1, l.output_dim};
            (void)in;
            flattened = true;
            break;
        }
        case LayerKind::Dropout:
            break;
        }
        shapes.push_back(s);
    }
    return shapes;
}

std::uint64_t arch_param_count(const ArchSpec& arch) {
    std::vector<Shape3> shapes = shape_chain(arch);
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
        const LayerSpec& l = arch.layers[i];
        const Shape3& in = shapes[i];
        switch (l.kind) {
        case LayerKind::Conv:
            total += static_cast<std::uint64_t>(l.kernel) * l.kernel * in.c * l.output_dim +
                     l.output_dim;
            break;
        case LayerKind::DepthwiseConv:
            total += static_cast<std::uint64_t>(l.kernel) * l.kernel * in.c + in.c;
            break;
        case LayerKind::DenseReLU:
        case LayerKind::DenseLinear:
            total += in.elems() * static_cast<std::uint64_t>(l.output_dim) + l.output_dim;
            break;
        default:
            break;
        }
    }
    return total;
}

} // namespace mcml
