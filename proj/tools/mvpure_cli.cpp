#include "mvpure/cli.hpp"

int main(int argc, char** argv) { return mvpure::cli::run(argc, argv); }
