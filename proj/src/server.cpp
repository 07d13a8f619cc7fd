#include "freedrag/server.hpp"

#include "httplib.h"

#include <cstdlib>
#include <iostream>

namespace freedrag {

namespace {

constexpr const char* kJson = "application/json";

void reply(httplib::Response& res, int code, const Json& body) {
  res.status = code;
  res.set_content(body.dump(), kJson);
}

void error(httplib::Response& res, int code, const std::string& msg, Json extra = Json::object()) {
  extra["error"] = msg;
  reply(res, code, extra);
}

Json parse_body(const httplib::Request& req) {
  try {
    return Json::parse(req.body);
  } catch (const Json::parse_error& e) {
    throw ContractViolation(std::string("malformed JSON body: ") + e.what());
  }
}

/// Runs fn on the session's worker and maps exceptions to HTTP errors.
template <typename Fn>
void with_session(SessionRegistry& registry, const httplib::Request& req, httplib::Response& res,
                  Fn fn) {
  const std::string id = req.path_params.at("id");
  auto worker = registry.find(id);
  if (!worker) return error(res, 404, "unknown session '" + id + "'");
  try {
    reply(res, 200, worker->submit(std::move(fn)).get());
  } catch (const SessionConflict& e) {
    error(res, 409, e.what(), {{"status", to_string(e.status())}});
  } catch (const ContractViolation& e) {
    error(res, 400, e.what());
  } catch (const Json::exception& e) {
    error(res, 400, e.what());
  }
}

}  // namespace

int port_from_env() {
  if (const char* v = std::getenv("FREEDRAG_PORT")) {
    char* end = nullptr;
    const long p = std::strtol(v, &end, 10);
    if (end != v && *end == '\0' && p > 0 && p < 65536) return static_cast<int>(p);
  }
  return kDefaultPort;
}

std::unique_ptr<httplib::Server> make_server(std::shared_ptr<SessionRegistry> registry) {
  auto server = std::make_unique<httplib::Server>();
  auto& reg = *registry;

  server->set_default_headers({{"Access-Control-Allow-Origin", "*"},
                               {"Access-Control-Allow-Headers", "Content-Type"},
                               {"Access-Control-Allow-Methods", "GET, POST, PUT, DELETE, OPTIONS"}});
  server->Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  server->Get("/health", [](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, {{"ok", true}});
  });

  server->Post("/sessions", [registry, &reg](const httplib::Request& req, httplib::Response& res) {
    std::string id;
    try {
      id = reg.create(instruction_from_json(parse_body(req)));
    } catch (const ContractViolation& e) {
      return error(res, 400, e.what());
    } catch (const Json::exception& e) {
      return error(res, 400, e.what());
    }
    auto worker = reg.find(id);
    reply(res, 201, worker->submit([](Session& s) {
      return Json{{"session_id", s.id()},
                  {"status", to_string(s.status())},
                  {"instruction", instruction_to_json(s.instruction())},
                  {"render", render_to_json(s.current_render())}};
    }).get());
  });

  server->Post("/sessions/restore", [registry, &reg](const httplib::Request& req,
                                                     httplib::Response& res) {
    try {
      const std::string id = reg.adopt(Session::from_record(parse_body(req)));
      reply(res, 201, {{"session_id", id}});
    } catch (const ContractViolation& e) {
      error(res, 400, e.what());
    } catch (const Json::exception& e) {
      error(res, 400, e.what());
    }
  });

  server->Get("/sessions", [registry, &reg](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, {{"sessions", reg.ids()}});
  });

  server->Get("/sessions/:id", [registry, &reg](const httplib::Request& req, httplib::Response& res) {
    with_session(reg, req, res, [](Session& s) { return s.snapshot(); });
  });

  server->Get("/sessions/:id/record",
              [registry, &reg](const httplib::Request& req, httplib::Response& res) {
                with_session(reg, req, res, [](Session& s) { return s.to_record(); });
              });

  server->Put("/sessions/:id/points",
              [registry, &reg](const httplib::Request& req, httplib::Response& res) {
                Json body;
                try {
                  body = parse_body(req);
                  if (!body.is_object() || !body.contains("points")) {
                    throw ContractViolation("body must be {\"points\": [...]}");
                  }
                } catch (const ContractViolation& e) {
                  if (!reg.find(req.path_params.at("id"))) {
                    return error(res, 404, "unknown session '" + req.path_params.at("id") + "'");
                  }
                  return error(res, 400, e.what());
                }
                with_session(reg, req, res, [body](Session& s) {
                  s.set_points(points_from_json(body["points"]));
                  return s.snapshot();
                });
              });

  server->Put("/sessions/:id/mask", [registry, &reg](const httplib::Request& req,
                                                     httplib::Response& res) {
    Json body;
    try {
      body = parse_body(req);
      if (!body.is_object() || !body.contains("mask")) {
        throw ContractViolation("body must be {\"mask\": rle | null}");
      }
    } catch (const ContractViolation& e) {
      if (!reg.find(req.path_params.at("id"))) {
        return error(res, 404, "unknown session '" + req.path_params.at("id") + "'");
      }
      return error(res, 400, e.what());
    }
    with_session(reg, req, res, [body](Session& s) {
      std::optional<Mask> mask;
      if (!body["mask"].is_null()) mask = mask_from_rle(body["mask"]);
      s.set_mask(std::move(mask));
      return s.snapshot();
    });
  });

  server->Post("/sessions/:id/step", [registry, &reg](const httplib::Request& req,
                                                      httplib::Response& res) {
    with_session(reg, req, res, [](Session& s) {
      const StepOutcome out = s.step();
      Json points = Json::array();
      for (const auto& p : s.state().points) points.push_back(point_to_json(p.current));
      return Json{{"status", to_string(out.status)},
                  {"version",
                   {{"drag_index", s.state().drag_index}, {"substep", s.state().substep}}},
                  {"trace_delta", trace_records_to_json(s.state().trace, out.trace_from)},
                  {"cursor", s.state().trace.size()},
                  {"positions", points},
                  {"render", render_to_json(s.current_render())}};
    });
  });

  server->Post("/sessions/:id/reset", [registry, &reg](const httplib::Request& req,
                                                       httplib::Response& res) {
    with_session(reg, req, res, [](Session& s) {
      s.reset();
      return s.snapshot();
    });
  });

  server->Get("/sessions/:id/trace", [registry, &reg](const httplib::Request& req,
                                                      httplib::Response& res) {
    std::size_t since = 0;
    if (req.has_param("since")) {
      try {
        const long long v = std::stoll(req.get_param_value("since"));
        if (v < 0) throw std::invalid_argument("negative");
        since = static_cast<std::size_t>(v);
      } catch (const std::exception&) {
        return error(res, 400, "since must be a non-negative integer");
      }
    }
    with_session(reg, req, res, [since](Session& s) {
      const std::size_t from = std::min(since, s.state().trace.size());
      return Json{{"records", trace_records_to_json(s.state().trace, from)},
                  {"cursor", s.state().trace.size()},
                  {"status", to_string(s.status())}};
    });
  });

  server->Delete("/sessions/:id", [registry, &reg](const httplib::Request& req,
                                                   httplib::Response& res) {
    const std::string id = req.path_params.at("id");
    if (!reg.erase(id)) return error(res, 404, "unknown session '" + id + "'");
    reply(res, 200, {{"deleted", id}});
  });

  return server;
}

void serve(const std::string& host, int port) {
  auto registry = std::make_shared<SessionRegistry>();
  auto server = make_server(registry);
  std::cerr << "freedrag: serving on http://" << host << ":" << port << "\n";
  if (!server->listen(host, port)) {
    throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
  }
}

}  // namespace freedrag
