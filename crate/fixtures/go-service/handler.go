package main

import (
	"fmt"
	"net/http"
)

func greeting(name string) string {
	if name == "" {
		name = "world"
	}
	return fmt.Sprintf("hello, %s", name)
}

func handleHello(w http.ResponseWriter, r *http.Request) {
	fmt.Fprintln(w, greeting(r.URL.Query().Get("name")))
}
