#include <mvpure/cli.hpp>

int main(int argc, char** argv) {
    return mvpure::cli::cli_main(argc, argv);
}
