#include <sigk/cli.hpp>

int main(int argc, char** argv) { return sigk::cli::run(argc, argv); }
