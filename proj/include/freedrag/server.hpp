#pragma once

#include <memory>
#include <string>

#include "freedrag/session.hpp"

namespace httplib {
class Server;
}

namespace freedrag {

inline constexpr int kDefaultPort = 8787;

/// FREEDRAG_PORT when set and valid, otherwise kDefaultPort.
int port_from_env();

/// HTTP JSON API over a session registry.
///
///   POST   /sessions                 instruction JSON -> id, status, render
///   GET    /sessions                 ids
///   GET    /sessions/{id}            snapshot
///   PUT    /sessions/{id}/points     {"points": [...]} -> snapshot
///   PUT    /sessions/{id}/mask       {"mask": rle | null} -> snapshot
///   POST   /sessions/{id}/step       one drag -> status, render, trace delta
///   POST   /sessions/{id}/reset      -> snapshot
///   GET    /sessions/{id}/trace      ?since=n -> records [n, end)
///   GET    /sessions/{id}/record     persistable session record
///   POST   /sessions/restore         session record -> id
///   DELETE /sessions/{id}
///
/// Errors are {"error": message}: 400 malformed body, 404 unknown session,
/// 409 stepping a finished session (with its final status).
std::unique_ptr<httplib::Server> make_server(std::shared_ptr<SessionRegistry> registry);

/// Blocks serving on host:port.
void serve(const std::string& host, int port);

}  // namespace freedrag
