#ifndef FD2CL_CHECKPOINT_HPP
#define FD2CL_CHECKPOINT_HPP

#include <filesystem>

#include "fd2cl/model.hpp"

namespace fd2cl::model {

// Model checkpoint: 8-byte magic "FD2CL\0\0\1", a little-endian u64 length
// prefix, a UTF-8 JSON header listing model dims and each named tensor's
// shape and dtype, then raw little-endian f64 payloads in header order.
void save_checkpoint(const ModelState& m, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace fd2cl::model

#endif
