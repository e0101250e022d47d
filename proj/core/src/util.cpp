#include "dcsrl/util.hpp"

#include "dcsrl/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

namespace dcsrl
{

void write_file_atomic( const std::filesystem::path& path, std::string_view contents )
{
    if ( path.has_parent_path() )
        std::filesystem::create_directories( path.parent_path() );
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out( tmp, std::ios::binary | std::ios::trunc );
        if ( !out )
            throw Error( "cannot write " + tmp.string() );
        out.write( contents.data(), static_cast<std::streamsize>( contents.size() ) );
        out.flush();
        if ( !out )
            throw Error( "short write to " + tmp.string() );
    }
    std::error_code ec;
    std::filesystem::rename( tmp, path, ec );
    if ( ec )
        throw Error( "cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message() );
}

std::string read_file( const std::filesystem::path& path )
{
    std::ifstream in( path, std::ios::binary );
    if ( !in )
        throw Error( "cannot open " + path.string() );
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::string format_double( double v )
{
    char buf[ 64 ];
    const auto [ end, ec ] = std::to_chars( buf, buf + sizeof buf, v );
    if ( ec != std::errc{} )
        return std::to_string( v );
    return { buf, end };
}

} // namespace dcsrl
