#include "sicnn/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace sicnn {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v)) {
        throw ConfigError("'" + key + "': expected a number, got '" + text + "'");
    }
    return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& text) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw ConfigError("'" + key + "': expected a non-negative integer, got '" + text + "'");
    }
    return v;
}

std::vector<std::uint64_t> parse_list(const std::string& key, const std::string& text) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(parse_uint(key, item));
        }
    }
    return out;
}

template <typename Seq>
std::string fmt_list(const Seq& values) {
    std::string out;
    for (const auto& v : values) {
        if (!out.empty()) {
            out += ',';
        }
        out += std::to_string(v);
    }
    return out;
}

struct Field {
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

template <typename T>
Field number_field(T RunConfig::*section, double T::*member) {
    return {[=](const RunConfig& c) { return fmt_double((c.*section).*member); },
            [=](RunConfig& c, const std::string& k, const std::string& v) { (c.*section).*member = parse_double(k, v); }};
}

template <typename T, typename U>
Field uint_field(T RunConfig::*section, U T::*member) {
    return {[=](const RunConfig& c) { return std::to_string((c.*section).*member); },
            [=](RunConfig& c, const std::string& k, const std::string& v) {
                (c.*section).*member = static_cast<U>(parse_uint(k, v));
            }};
}

// Accessor-based field for nested members.
template <typename Get, typename Set>
Field custom(Get g, Set s) {
    return {g, s};
}

void add_schedule(std::map<std::string, Field>& f, const std::string& prefix, LrSchedule TrainConfig::*sched) {
    f[prefix + "_lr"] = custom([=](const RunConfig& c) { return fmt_double((c.train.*sched).start_lr); },
                               [=](RunConfig& c, const std::string& k, const std::string& v) {
                                   (c.train.*sched).start_lr = parse_double(k, v);
                               });
    f[prefix + "_drops"] = custom([=](const RunConfig& c) { return fmt_list((c.train.*sched).drops); },
                                  [=](RunConfig& c, const std::string& k, const std::string& v) {
                                      (c.train.*sched).drops = parse_list(k, v);
                                  });
    f[prefix + "_iters"] = custom([=](const RunConfig& c) { return std::to_string((c.train.*sched).final_iter); },
                                  [=](RunConfig& c, const std::string& k, const std::string& v) {
                                      (c.train.*sched).final_iter = parse_uint(k, v);
                                  });
}

const std::map<std::string, Field>& registry() {
    static const std::map<std::string, Field> fields = [] {
        std::map<std::string, Field> f;
        using TC = TrainConfig;
        f["model.preset"] = custom([](const RunConfig& c) { return c.preset; },
                                   [](RunConfig& c, const std::string&, const std::string& v) {
                                       // resets model and training fields; data and eval keep their values
                                       RunConfig p = RunConfig::from_preset(v);
                                       c.preset = p.preset;
                                       c.train = p.train;
                                   });
        auto hall_uint = [&](const std::string& name, std::size_t HallucinationNetConfig::*m) {
            f["model.hall." + name] =
                custom([=](const RunConfig& c) { return std::to_string(c.train.hall.*m); },
                       [=](RunConfig& c, const std::string& k, const std::string& v) { c.train.hall.*m = parse_uint(k, v); });
        };
        hall_uint("input_width", &HallucinationNetConfig::input_width);
        hall_uint("input_height", &HallucinationNetConfig::input_height);
        hall_uint("channels", &HallucinationNetConfig::channels);
        hall_uint("upscale_factor", &HallucinationNetConfig::upscale_factor);
        hall_uint("dense_layers", &HallucinationNetConfig::dense_block_layers);
        hall_uint("growth_rate", &HallucinationNetConfig::growth_rate);
        hall_uint("mapping_channels", &HallucinationNetConfig::mapping_channels);
        auto rec_uint = [&](const std::string& name, std::size_t RecognitionNetConfig::*m) {
            f["model.rec." + name] =
                custom([=](const RunConfig& c) { return std::to_string(c.train.rec.*m); },
                       [=](RunConfig& c, const std::string& k, const std::string& v) { c.train.rec.*m = parse_uint(k, v); });
        };
        rec_uint("input_width", &RecognitionNetConfig::input_width);
        rec_uint("input_height", &RecognitionNetConfig::input_height);
        rec_uint("channels", &RecognitionNetConfig::channels);
        rec_uint("feature_dim", &RecognitionNetConfig::feature_dim);
        rec_uint("conv_pad", &RecognitionNetConfig::conv_pad);
        auto rec_array = [&](const std::string& name, std::array<std::size_t, 4> RecognitionNetConfig::*m) {
            f["model.rec." + name] = custom([=](const RunConfig& c) { return fmt_list(c.train.rec.*m); },
                                            [=](RunConfig& c, const std::string& k, const std::string& v) {
                                                const auto list = parse_list(k, v);
                                                if (list.size() != 4) {
                                                    throw ConfigError("'" + k + "': expected 4 comma-separated values");
                                                }
                                                std::copy(list.begin(), list.end(), (c.train.rec.*m).begin());
                                            });
        };
        rec_array("widths", &RecognitionNetConfig::widths);
        rec_array("blocks", &RecognitionNetConfig::blocks);

        f["train.approach"] = custom([](const RunConfig& c) { return approach_name(c.train.approach); },
                                     [](RunConfig& c, const std::string& k, const std::string& v) {
                                         try {
                                             c.train.approach = parse_approach(v);
                                         } catch (const std::invalid_argument& e) {
                                             throw ConfigError("'" + k + "': " + e.what());
                                         }
                                     });
        f["train.alpha"] = number_field(&RunConfig::train, &TC::alpha);
        f["train.beta"] = number_field(&RunConfig::train, &TC::beta);
        f["train.margin"] = custom([](const RunConfig& c) { return std::to_string(c.train.margin); },
                                   [](RunConfig& c, const std::string& k, const std::string& v) {
                                       c.train.margin = static_cast<int>(parse_uint(k, v));
                                   });
        f["train.lambda0"] = custom([](const RunConfig& c) { return fmt_double(c.train.anneal.lambda0); },
                                    [](RunConfig& c, const std::string& k, const std::string& v) {
                                        c.train.anneal.lambda0 = parse_double(k, v);
                                    });
        f["train.lambda_min"] = custom([](const RunConfig& c) { return fmt_double(c.train.anneal.lambda_min); },
                                       [](RunConfig& c, const std::string& k, const std::string& v) {
                                           c.train.anneal.lambda_min = parse_double(k, v);
                                       });
        f["train.lambda_decay"] = custom([](const RunConfig& c) { return fmt_double(c.train.anneal.decay); },
                                         [](RunConfig& c, const std::string& k, const std::string& v) {
                                             c.train.anneal.decay = parse_double(k, v);
                                         });
        f["train.batch_n"] = uint_field(&RunConfig::train, &TC::batch_n);
        f["train.rec_batch"] = uint_field(&RunConfig::train, &TC::rec_batch);
        f["train.pretrain_rec_batch"] = uint_field(&RunConfig::train, &TC::pretrain_rec_batch);
        f["train.momentum"] = number_field(&RunConfig::train, &TC::momentum);
        f["train.weight_decay"] = number_field(&RunConfig::train, &TC::weight_decay);
        f["train.seed"] = uint_field(&RunConfig::train, &TC::seed);
        f["train.log_every"] = uint_field(&RunConfig::train, &TC::log_every);
        f["train.val_samples"] = uint_field(&RunConfig::train, &TC::val_samples);
        add_schedule(f, "train.rec", &TC::rec_schedule);
        add_schedule(f, "train.hall", &TC::hall_schedule);
        add_schedule(f, "train.di", &TC::di_schedule);
        add_schedule(f, "train.di_rec", &TC::di_rec_schedule);

        f["data.identities"] = uint_field(&RunConfig::data, &DataConfig::identities);
        f["data.samples"] = uint_field(&RunConfig::data, &DataConfig::samples);
        f["data.seed"] = uint_field(&RunConfig::data, &DataConfig::seed);
        auto opt_number = [&](const std::string& name, double DatasetOptions::*m) {
            f["data." + name] = custom([=](const RunConfig& c) { return fmt_double(c.data.options.*m); },
                                       [=](RunConfig& c, const std::string& k, const std::string& v) {
                                           c.data.options.*m = parse_double(k, v);
                                       });
        };
        opt_number("test_fraction", &DatasetOptions::test_fraction);
        opt_number("min_distance", &DatasetOptions::min_distance);
        opt_number("max_shift", &DatasetOptions::max_shift);
        opt_number("max_rotation_deg", &DatasetOptions::max_rotation_deg);
        opt_number("gain_spread", &DatasetOptions::gain_spread);
        opt_number("noise_sigma", &DatasetOptions::noise_sigma);
        f["data.max_retries"] = custom([](const RunConfig& c) { return std::to_string(c.data.options.max_retries); },
                                       [](RunConfig& c, const std::string& k, const std::string& v) {
                                           c.data.options.max_retries = parse_uint(k, v);
                                       });

        f["eval.batch"] = uint_field(&RunConfig::eval, &EvalConfig::batch);
        f["eval.save_images"] = uint_field(&RunConfig::eval, &EvalConfig::save_images);
        return f;
    }();
    return fields;
}

const Field& field_for(const std::string& key) {
    const auto& r = registry();
    auto it = r.find(key);
    if (it == r.end()) {
        throw ConfigError("unknown key '" + key + "'");
    }
    return it->second;
}

}  // namespace

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

RunConfig RunConfig::from_preset(const std::string& name) {
    RunConfig cfg;
    cfg.preset = name;
    if (name == "desk") {
        cfg.train = TrainConfig::desk();
    } else if (name == "paper" || name == "paper24") {
        cfg.train = TrainConfig::paper();
        if (name == "paper24") {
            cfg.train.hall = HallucinationNetConfig::paper24();
        }
    } else {
        throw ConfigError("unknown preset '" + name + "' (expected desk, paper or paper24)");
    }
    return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) { field_for(key).set(*this, key, value); }

std::string RunConfig::get(const std::string& key) const { return field_for(key).get(*this); }

std::vector<std::string> RunConfig::keys() {
    std::vector<std::string> out;
    for (const auto& [k, f] : registry()) {
        out.push_back(k);
    }
    return out;
}

std::string RunConfig::canonical_text() const {
    std::string out;
    for (const auto& [k, f] : registry()) {
        out += k + " = " + f.get(*this) + "\n";
    }
    return out;
}

std::string RunConfig::hash() const { return fnv1a_hex(canonical_text()); }

std::string RunConfig::model_hash() const {
    std::string text;
    for (const auto& [k, f] : registry()) {
        if (k.rfind("model.", 0) == 0) {
            text += k + " = " + f.get(*this) + "\n";
        }
    }
    return fnv1a_hex(text);
}

void RunConfig::validate() const {
    train.validate();
    if (data.identities == 0 || data.samples == 0) {
        throw ConfigError("data.identities and data.samples must be positive");
    }
    if (eval.batch == 0) {
        throw ConfigError("eval.batch must be positive");
    }
    if (data.options.max_shift > 2.0 || data.options.max_rotation_deg > 5.0 || data.options.noise_sigma > 0.02 ||
        data.options.gain_spread > 0.1 || data.options.max_shift < 0.0 || data.options.max_rotation_deg < 0.0 ||
        data.options.noise_sigma < 0.0 || data.options.gain_spread < 0.0) {
        throw ConfigError("nuisance ranges must stay within shift <= 2 px, rotation <= 5 deg, gain spread <= 0.1, "
                          "noise sigma <= 0.02");
    }
}

RunConfig parse_run_config(const std::string& text, const std::string& source) {
    struct Entry {
        std::size_t line;
        std::string key;
        std::string value;
    };
    std::vector<Entry> entries;
    std::istringstream is(text);
    std::string line;
    for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.resize(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'section.key = value'");
        }
        entries.push_back({lineno, trim(line.substr(0, eq)), trim(line.substr(eq + 1))});
    }
    RunConfig cfg;
    auto apply = [&](const Entry& e) {
        try {
            cfg.set(e.key, e.value);
        } catch (const ConfigError& err) {
            throw ConfigError(source + ":" + std::to_string(e.line) + ": " + err.what());
        }
    };
    for (const auto& e : entries) {
        if (e.key == "model.preset") {
            apply(e);
        }
    }
    for (const auto& e : entries) {
        if (e.key != "model.preset") {
            apply(e);
        }
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw ConfigError("cannot read config file '" + path.string() + "'");
    }
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_run_config(text, path.string());
}

void apply_overrides(RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& overrides) {
    for (const auto& [k, v] : overrides) {
        if (k == "model.preset") {
            cfg.set(k, v);
        }
    }
    for (const auto& [k, v] : overrides) {
        if (k != "model.preset") {
            cfg.set(k, v);
        }
    }
}

}  // namespace sicnn
