export * from "./api.js";
export * from "./viewmodel.js";
export * from "./review.js";
export * from "./render.js";
