#pragma once

// Run configuration: one INI file with sections, every key optional.
//
//   [run]      seed, out, workers, verbose, plot_format
//   [data]     path, target, knowledge_base, L, K, stride
//   [synth]    rows, columns, noise, daily_amplitude, weekly_amplitude, ar_coefficient,
//              observation_noise, load_base, load_scale, start_epoch, cadence_seconds, coupling
//   [split]    train, val, test, scarcity_fraction, scarcity_mode
//   [phase1]   epochs, lr, batch_size, d, temperature, pooling, direction, token_budget,
//              text_layers, text_heads, series_hidden
//   [phase2]   epochs, lr, batch_size, d, prefix_len, egia_heads, head, early_stopping,
//              patience, max_steps, revin_epsilon, adpt, egia, kari
//   [backbone] kind, layers, hidden_dim, heads, causal, seed, weights_path
//   [grid]     fractions, horizons, seeds, variants
//
// Lists are comma or space separated. Values given with RunConfig::set (command
// line flags) override the file, which overrides the defaults.

#include "hyperload/alignment.hpp"
#include "hyperload/cats_template.hpp"
#include "hyperload/dataset.hpp"
#include "hyperload/errors.hpp"
#include "hyperload/evalbench.hpp"
#include "hyperload/forecaster.hpp"
#include "hyperload/report.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace hyperload {

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',' || c == ' ' || c == '\t') {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) {
        out.push_back(cur);
    }
    return out;
}

inline double to_double(const std::string& key, const std::string& v) {
    const auto d = parse_double(v);
    if (!d) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    }
    return *d;
}

inline std::uint64_t to_unsigned(const std::string& key, const std::string& v) {
    const double d = to_double(key, v);
    if (d < 0 || d != std::floor(d) || d > 9.007199254740992e15) {
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    }
    return static_cast<std::uint64_t>(d);
}

inline std::int64_t to_integer(const std::string& key, const std::string& v) {
    const double d = to_double(key, v);
    if (d != std::floor(d) || std::abs(d) > 9.007199254740992e15) {
        throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
    }
    return static_cast<std::int64_t>(d);
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F&& fmt) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        out += (i ? "," : "") + fmt(xs[i]);
    }
    return out;
}

} // namespace detail

struct RunConfig {
    std::uint64_t seed = 0;
    std::string out = "hyperload-out";
    std::size_t workers = 1;
    bool verbose = false;
    ImageFormat plot_format = ImageFormat::png;

    std::string data_path;  // empty: synthetic data
    std::string target = "cooling_load";
    std::string knowledge_base;  // empty: built-in text
    std::size_t input_len = 96;
    std::size_t horizon = 24;
    std::size_t stride = 1;

    SynthConfig synth;
    SplitSpec split;
    ScarcityMode scarcity_mode = ScarcityMode::suffix;
    AlignmentConfig phase1;
    ForecasterConfig phase2;
    ExperimentGrid grid;

    RunConfig() { bind(); }
    RunConfig(const RunConfig& o) : RunConfig() { copy_values(o); }
    RunConfig& operator=(const RunConfig& o) {
        copy_values(o);
        return *this;
    }

    /// Sets `section.key`; unknown keys and malformed values raise ConfigError naming the key.
    void set(const std::string& key, const std::string& value) {
        for (auto& f : fields_) {
            if (f.key == key) {
                f.set(detail::trim(value).empty() ? std::string() : std::string(detail::trim(value)));
                return;
            }
        }
        throw ConfigError("unknown config key '" + key + "'");
    }

    std::string get(const std::string& key) const {
        for (const auto& f : fields_) {
            if (f.key == key) {
                return f.get();
            }
        }
        throw ConfigError("unknown config key '" + key + "'");
    }

    std::vector<std::string> keys() const {
        std::vector<std::string> out;
        for (const auto& f : fields_) {
            out.push_back(f.key);
        }
        return out;
    }

    void load_file(const std::string& path) {
        boost::property_tree::ptree tree;
        try {
            boost::property_tree::ini_parser::read_ini(path, tree);
        } catch (const boost::property_tree::ini_parser_error& e) {
            throw ConfigError("cannot parse config '" + path + "': " + e.message() + " (line " +
                              std::to_string(e.line()) + ")");
        }
        for (const auto& [section, body] : tree) {
            if (body.empty()) {
                throw ConfigError("config key '" + section + "' must sit inside a [section]");
            }
            for (const auto& [key, value] : body) {
                if (!value.empty()) {
                    throw ConfigError("config key '" + section + "." + key + "' is nested too deeply");
                }
                set(section + "." + key, value.data());
            }
        }
    }

    /// Every key with its resolved value, as a loadable INI document.
    void print(std::ostream& os) const {
        std::string section;
        for (const auto& f : fields_) {
            const auto dot = f.key.find('.');
            const std::string s = f.key.substr(0, dot);
            if (s != section) {
                os << (section.empty() ? "" : "\n") << '[' << s << "]\n";
                section = s;
            }
            os << f.key.substr(dot + 1) << " = " << f.get() << '\n';
        }
    }

    std::string to_string() const {
        std::ostringstream os;
        print(os);
        return os.str();
    }

    void validate() const {
        synth.validate();
        split.validate();
        phase1.validate();
        ForecasterConfig p2 = phase2;
        p2.input_len = input_len;
        p2.horizon = horizon;
        p2.validate();
        grid.validate();
        if (stride < 1) {
            throw ConfigError("config key 'data.stride' must be at least 1");
        }
        if (workers < 1) {
            throw ConfigError("config key 'run.workers' must be at least 1");
        }
    }

    KnowledgeBase load_kb() const {
        return knowledge_base.empty() ? default_knowledge_base() : load_knowledge_base(knowledge_base);
    }

    /// Phase-2 settings with L, K and the root seed applied.
    ForecasterConfig forecaster() const {
        ForecasterConfig p2 = phase2;
        p2.input_len = input_len;
        p2.horizon = horizon;
        p2.seed = seed;
        return p2;
    }

    AlignmentConfig alignment() const {
        AlignmentConfig p1 = phase1;
        p1.seed = seed;
        return p1;
    }

    ExperimentGrid experiment_grid() const {
        ExperimentGrid g = grid;
        g.input_len = input_len;
        return g;
    }

    GridConfig grid_config() const {
        GridConfig g;
        g.phase1 = phase1;
        g.phase2 = phase2;
        g.split = split;
        g.split.scarcity_fraction = 1.0;
        g.scarcity_mode = scarcity_mode;
        g.kb = load_kb();
        g.stride = stride;
        g.workers = workers;
        g.output_dir = out;
        g.verbose = verbose;
        return g;
    }

private:
    struct Field {
        std::string key;
        std::function<void(const std::string&)> set;
        std::function<std::string()> get;
    };
    std::vector<Field> fields_;

    void copy_values(const RunConfig& o) {
        for (auto& f : fields_) {
            f.set(o.get(f.key));
        }
    }

    void add(std::string key, std::function<void(const std::string&)> set, std::function<std::string()> get) {
        fields_.push_back({std::move(key), std::move(set), std::move(get)});
    }

    void str(const std::string& key, std::string& v) {
        add(key, [&v](const std::string& s) { v = s; }, [&v] { return v; });
    }
    void real(const std::string& key, double& v) {
        add(key, [key, &v](const std::string& s) { v = detail::to_double(key, s); },
            [&v] { return detail::format_double(v); });
    }
    template <typename U>
    void uint(const std::string& key, U& v) {
        add(key, [key, &v](const std::string& s) { v = static_cast<U>(detail::to_unsigned(key, s)); },
            [&v] { return std::to_string(v); });
    }
    void sint(const std::string& key, std::int64_t& v) {
        add(key, [key, &v](const std::string& s) { v = detail::to_integer(key, s); }, [&v] { return std::to_string(v); });
    }
    void flag(const std::string& key, bool& v) {
        add(key, [key, &v](const std::string& s) { v = detail::to_bool(key, s); }, [&v] { return v ? "true" : "false"; });
    }
    template <typename E, typename Parse>
    void choice(const std::string& key, E& v, Parse parse) {
        add(key,
            [key, &v, parse](const std::string& s) {
                try {
                    v = parse(s);
                } catch (const ConfigError& e) {
                    throw ConfigError("config key '" + key + "': " + e.what());
                }
            },
            [&v] { return std::string(hyperload::to_string(v)); });
    }

    void bind() {
        uint("run.seed", seed);
        str("run.out", out);
        uint("run.workers", workers);
        flag("run.verbose", verbose);
        add("run.plot_format",
            [this](const std::string& s) {
                try {
                    plot_format = parse_image_format(s);
                } catch (const ConfigError& e) {
                    throw ConfigError(std::string("config key 'run.plot_format': ") + e.what());
                }
            },
            [this] { return std::string(extension(plot_format)); });

        str("data.path", data_path);
        str("data.target", target);
        str("data.knowledge_base", knowledge_base);
        uint("data.L", input_len);
        uint("data.K", horizon);
        uint("data.stride", stride);

        uint("synth.rows", synth.rows);
        uint("synth.columns", synth.columns);
        real("synth.noise", synth.noise);
        real("synth.daily_amplitude", synth.daily_amplitude);
        real("synth.weekly_amplitude", synth.weekly_amplitude);
        real("synth.ar_coefficient", synth.ar_coefficient);
        real("synth.observation_noise", synth.observation_noise);
        real("synth.load_base", synth.load_base);
        real("synth.load_scale", synth.load_scale);
        sint("synth.start_epoch", synth.start_epoch);
        sint("synth.cadence_seconds", synth.cadence_seconds);
        add("synth.coupling",
            [this](const std::string& s) {
                synth.coupling.clear();
                for (const auto& x : detail::split_list(s)) {
                    synth.coupling.push_back(detail::to_double("synth.coupling", x));
                }
            },
            [this] { return detail::join(synth.coupling, [](double x) { return detail::format_double(x); }); });

        real("split.train", split.train);
        real("split.val", split.val);
        real("split.test", split.test);
        real("split.scarcity_fraction", split.scarcity_fraction);
        add("split.scarcity_mode",
            [this](const std::string& s) {
                if (s == "suffix") scarcity_mode = ScarcityMode::suffix;
                else if (s == "prefix") scarcity_mode = ScarcityMode::prefix;
                else throw ConfigError("config key 'split.scarcity_mode': expected suffix or prefix, got '" + s + "'");
            },
            [this] { return std::string(scarcity_mode == ScarcityMode::suffix ? "suffix" : "prefix"); });

        uint("phase1.epochs", phase1.epochs);
        real("phase1.lr", phase1.learning_rate);
        uint("phase1.batch_size", phase1.batch_size);
        uint("phase1.d", phase1.model_dim);
        real("phase1.temperature", phase1.temperature);
        choice("phase1.pooling", phase1.pooling, parse_pooling);
        choice("phase1.direction", phase1.direction, parse_loss_direction);
        uint("phase1.token_budget", phase1.token_budget);
        uint("phase1.text_layers", phase1.text_layers);
        uint("phase1.text_heads", phase1.text_heads);
        uint("phase1.series_hidden", phase1.series_hidden);

        uint("phase2.epochs", phase2.epochs);
        real("phase2.lr", phase2.learning_rate);
        uint("phase2.batch_size", phase2.batch_size);
        uint("phase2.d", phase2.model_dim);
        uint("phase2.prefix_len", phase2.prefix_len);
        uint("phase2.egia_heads", phase2.egia_heads);
        choice("phase2.head", phase2.head_mode, parse_head_mode);
        flag("phase2.early_stopping", phase2.early_stopping);
        uint("phase2.patience", phase2.patience);
        uint("phase2.max_steps", phase2.max_steps);
        real("phase2.revin_epsilon", phase2.revin_epsilon);
        flag("phase2.adpt", phase2.ablation.adpt);
        flag("phase2.egia", phase2.ablation.egia);
        flag("phase2.kari", phase2.ablation.kari);

        choice("backbone.kind", phase2.backbone.kind, parse_backbone_kind);
        uint("backbone.layers", phase2.backbone.layers);
        uint("backbone.hidden_dim", phase2.backbone.hidden_dim);
        uint("backbone.heads", phase2.backbone.heads);
        flag("backbone.causal", phase2.backbone.causal);
        uint("backbone.seed", phase2.backbone.seed);
        str("backbone.weights_path", phase2.backbone.weights_path);

        add("grid.fractions",
            [this](const std::string& s) {
                grid.fractions.clear();
                for (const auto& x : detail::split_list(s)) {
                    grid.fractions.push_back(detail::to_double("grid.fractions", x));
                }
            },
            [this] { return detail::join(grid.fractions, [](double x) { return detail::format_double(x); }); });
        add("grid.horizons",
            [this](const std::string& s) {
                grid.horizons.clear();
                for (const auto& x : detail::split_list(s)) {
                    grid.horizons.push_back(detail::to_unsigned("grid.horizons", x));
                }
            },
            [this] { return detail::join(grid.horizons, [](std::size_t x) { return std::to_string(x); }); });
        add("grid.seeds",
            [this](const std::string& s) {
                grid.seeds.clear();
                for (const auto& x : detail::split_list(s)) {
                    grid.seeds.push_back(detail::to_unsigned("grid.seeds", x));
                }
            },
            [this] { return detail::join(grid.seeds, [](std::uint64_t x) { return std::to_string(x); }); });
        add("grid.variants",
            [this](const std::string& s) {
                grid.variants.clear();
                for (const auto& x : detail::split_list(s)) {
                    try {
                        grid.variants.push_back(parse_variant(x));
                    } catch (const ConfigError& e) {
                        throw ConfigError(std::string("config key 'grid.variants': ") + e.what());
                    }
                }
            },
            [this] { return detail::join(grid.variants, [](Variant v) { return std::string(hyperload::to_string(v)); }); });
        // grid.L follows data.L
    }
};

} // namespace hyperload
