#pragma once

#include <json.hpp>

#include "jtsp/evaluation.hpp"

namespace jtsp::detail {

inline nlohmann::json metrics_json(const MetricsRecord& m) {
    return nlohmann::json{{"cl_acc", m.cl_acc},
                          {"cl_f1", m.cl_f1},
                          {"dp_acc", m.dp_acc},
                          {"dp_f1", m.dp_f1},
                          {"dp_f1_macro", m.dp_f1_macro},
                          {"sp_acc", m.sp_acc},
                          {"sp_f1", m.sp_f1},
                          {"deferral_rate", m.deferral_rate},
                          {"n", m.n},
                          {"counts",
                           {{"keep_correct", m.counts.keep_correct},
                            {"defer_correct", m.counts.defer_correct},
                            {"keep_incorrect", m.counts.keep_incorrect},
                            {"defer_incorrect", m.counts.defer_incorrect}}}};
}

inline MetricsRecord metrics_from(const nlohmann::json& j) {
    MetricsRecord m;
    m.cl_acc = j.at("cl_acc").get<double>();
    m.cl_f1 = j.at("cl_f1").get<double>();
    m.dp_acc = j.at("dp_acc").get<double>();
    m.dp_f1 = j.at("dp_f1").get<double>();
    m.dp_f1_macro = j.at("dp_f1_macro").get<double>();
    m.sp_acc = j.at("sp_acc").get<double>();
    m.sp_f1 = j.at("sp_f1").get<double>();
    m.deferral_rate = j.at("deferral_rate").get<double>();
    m.n = j.at("n").get<std::size_t>();
    const auto& c = j.at("counts");
    m.counts.keep_correct = c.at("keep_correct").get<std::size_t>();
    m.counts.defer_correct = c.at("defer_correct").get<std::size_t>();
    m.counts.keep_incorrect = c.at("keep_incorrect").get<std::size_t>();
    m.counts.defer_incorrect = c.at("defer_incorrect").get<std::size_t>();
    return m;
}

} // namespace jtsp::detail
