export { loadConfig, resolveConfig, SIZE_PRESETS, TrainConfig } from "./config";
export { readEpochFile, readPromptFile, writePredictions } from "./data";
export { StudentModel, sampleTopP } from "./model";
export { predictCommand, predictOnPrompts } from "./predict";
export { loadCheckpointFile, lossCurvePath, trainCommand, trainOnRows } from "./train";
