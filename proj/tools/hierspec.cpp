#include "hierspec_app.hpp"

int main(int argc, char** argv) { return hierspec::app::run(argc, argv); }
