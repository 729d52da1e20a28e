#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace compose {

std::string sha1_hex(std::string_view data);
// Git object id of a blob with this content.
std::string git_blob_sha1(std::string_view content);
// Throws IoError when the file cannot be read.
std::string git_blob_sha1_file(const std::filesystem::path& path);

}  // namespace compose
