#include <cctype>
#include <sstream>

#include "dcgmm/architecture.hpp"

namespace dcgmm {

LayerKind kind_of(const LayerSpec& spec) {
    if (std::holds_alternative<FoldingParams>(spec)) return LayerKind::folding;
    if (std::holds_alternative<PoolingParams>(spec)) return LayerKind::pooling;
    if (std::holds_alternative<GmmSpec>(spec)) return LayerKind::gmm;
    return LayerKind::classifier;
}

std::vector<Shape4> propagate_shapes(const ArchitectureConfig& arch, int64_t n) {
    std::vector<Shape4> shapes;
    shapes.reserve(arch.layers.size() + 1);
    shapes.push_back(Shape4{n, arch.input.h, arch.input.w, arch.input.c});
    for (size_t i = 0; i < arch.layers.size(); ++i) {
        const Shape4& in = shapes.back();
        const std::string at = "layer " + std::to_string(i + 1) + ": ";
        try {
            switch (kind_of(arch.layers[i])) {
                case LayerKind::folding:
                    shapes.push_back(fold_output_dims(in, std::get<FoldingParams>(arch.layers[i])));
                    break;
                case LayerKind::pooling:
                    shapes.push_back(pool_output_dims(in, std::get<PoolingParams>(arch.layers[i])));
                    break;
                case LayerKind::gmm: {
                    const auto& g = std::get<GmmSpec>(arch.layers[i]);
                    if (g.K < 1) throw ConfigError("GMM component count must be >= 1");
                    if (in.h < 1 || in.w < 1 || in.c < 1)
                        throw ConfigError("GMM input dims not positive: " + to_string(in));
                    shapes.push_back(Shape4{in.n, in.h, in.w, g.K});
                    break;
                }
                case LayerKind::classifier: {
                    const auto& c = std::get<ClassifierSpec>(arch.layers[i]);
                    if (c.M < 1) throw ConfigError("class count must be >= 1");
                    shapes.push_back(Shape4{in.n, 1, 1, c.M});
                    break;
                }
            }
        } catch (const ConfigError& e) {
            throw ConfigError(at + e.what());
        }
    }
    return shapes;
}

void validate_architecture(const ArchitectureConfig& arch) {
    if (arch.layers.empty()) throw ConfigError("architecture has no layers");
    if (arch.input.h < 1 || arch.input.w < 1 || arch.input.c < 1)
        throw ConfigError("input dims must be positive, got " + to_string(arch.input));
    for (size_t i = 0; i < arch.layers.size(); ++i)
        if (kind_of(arch.layers[i]) == LayerKind::classifier && i + 1 != arch.layers.size())
            throw ConfigError("layer " + std::to_string(i + 1) +
                              ": classifier must be the last layer");
    propagate_shapes(arch);
}

namespace {

// Cursor over the architecture text tracking line/column for diagnostics.
class Scanner {
public:
    explicit Scanner(const std::string& text) : text_(text) {}

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
            advance();
    }

    bool done() {
        skip_ws();
        return pos_ >= text_.size();
    }

    char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

    void expect(char c) {
        skip_ws();
        if (peek() != c) fail(std::string("expected '") + c + "'");
        advance();
    }

    bool accept(char c) {
        skip_ws();
        if (peek() != c) return false;
        advance();
        return true;
    }

    int64_t integer() {
        skip_ws();
        if (!std::isdigit(static_cast<unsigned char>(peek()))) fail("expected integer");
        int64_t v = 0;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
            v = v * 10 + (text_[pos_] - '0');
            advance();
        }
        return v;
    }

    std::string word() {
        skip_ws();
        std::string w;
        while (pos_ < text_.size() && std::isalpha(static_cast<unsigned char>(text_[pos_]))) {
            w += text_[pos_];
            advance();
        }
        return w;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw FormatError("architecture syntax error at line " + std::to_string(line_) +
                          ", column " + std::to_string(col_) + ": " + msg);
    }

private:
    void advance() {
        if (text_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    const std::string& text_;
    size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
};

std::vector<int64_t> arg_list(Scanner& s) {
    s.expect('(');
    std::vector<int64_t> args;
    args.push_back(s.integer());
    while (s.accept(',')) args.push_back(s.integer());
    s.expect(')');
    return args;
}

}  // namespace

ArchitectureConfig parse_architecture(const std::string& text, std::optional<Shape4> fallback_input) {
    Scanner s(text);
    ArchitectureConfig arch;
    bool have_input = false;

    while (!s.done()) {
        const std::string w = s.word();
        if (w == "input") {
            if (have_input || !arch.layers.empty()) s.fail("'input' clause must come first");
            arch.input.h = s.integer();
            arch.input.w = s.integer();
            arch.input.c = s.integer();
            have_input = true;
        } else if (w == "F") {
            const auto a = arg_list(s);
            if (a.size() != 4) s.fail("F expects 4 arguments (f_y,f_x,d_y,d_x)");
            arch.layers.push_back(FoldingParams{a[0], a[1], a[2], a[3]});
        } else if (w == "P") {
            const auto a = arg_list(s);
            if (a.size() == 2)
                arch.layers.push_back(PoolingParams{a[0], a[0], a[1], a[1]});
            else if (a.size() == 4)
                arch.layers.push_back(PoolingParams{a[0], a[1], a[2], a[3]});
            else
                s.fail("P expects 2 (k,d) or 4 (k_y,k_x,d_y,d_x) arguments");
        } else if (w == "G") {
            const auto a = arg_list(s);
            if (a.size() != 1) s.fail("G expects 1 argument (K)");
            arch.layers.push_back(GmmSpec{a[0]});
        } else if (w == "C") {
            const auto a = arg_list(s);
            if (a.size() != 1) s.fail("C expects 1 argument (M)");
            arch.layers.push_back(ClassifierSpec{a[0]});
        } else if (w.empty()) {
            s.fail("expected layer term");
        } else {
            s.fail("unknown layer type '" + w + "'");
        }
        if (!s.done()) s.expect('/');
    }

    if (!have_input) {
        if (!fallback_input)
            throw FormatError("architecture has no 'input H W C' clause and no fallback dims");
        arch.input = *fallback_input;
    }
    arch.input.n = 0;
    validate_architecture(arch);
    return arch;
}

std::string format_architecture(const ArchitectureConfig& arch) {
    std::ostringstream os;
    os << "input " << arch.input.h << " " << arch.input.w << " " << arch.input.c;
    for (const auto& layer : arch.layers) {
        os << " / ";
        switch (kind_of(layer)) {
            case LayerKind::folding: {
                const auto& f = std::get<FoldingParams>(layer);
                os << "F(" << f.f_y << "," << f.f_x << "," << f.delta_y << "," << f.delta_x << ")";
                break;
            }
            case LayerKind::pooling: {
                const auto& p = std::get<PoolingParams>(layer);
                os << "P(" << p.k_y << "," << p.k_x << "," << p.delta_y << "," << p.delta_x << ")";
                break;
            }
            case LayerKind::gmm:
                os << "G(" << std::get<GmmSpec>(layer).K << ")";
                break;
            case LayerKind::classifier:
                os << "C(" << std::get<ClassifierSpec>(layer).M << ")";
                break;
        }
    }
    return os.str();
}

}  // namespace dcgmm
