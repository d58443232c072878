// Eigen must precede httplib: <resolv.h> defines a `_res` macro that
// collides with Eigen parameter names.
#include "pedocds/platform.hpp"

#include <httplib.h>

namespace pedocds::platform {

void serve(Service& service, const std::string& host, int port) {
  httplib::Server server;
  auto handler = [&service](const httplib::Request& req, httplib::Response& res) {
    Request r;
    r.method = req.method;
    r.path = req.path;
    r.body = req.body;
    r.content_type = req.get_header_value("Content-Type");
    if (r.content_type.empty()) r.content_type = "application/json";
    for (const auto& [key, value] : req.params) r.query.emplace(key, value);
    const Response out = service.handle(r);
    res.status = out.status;
    res.set_content(out.body, out.content_type);
  };
  server.Get(R"(/.*)", handler);
  server.Post(R"(/.*)", handler);
  if (!server.listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace pedocds::platform
