#include <string>
#include <vector>

#include <fedlora/cli.hpp>

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return fedlora::cli::dispatch(args);
}
