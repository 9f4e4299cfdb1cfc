// Scripted console session against a running service: create a session on
// the two-bedroom demo world, submit two turns, and assert that the peak
// count drops from >=2 to 1 while the displayed top-1 label matches the API
// payload. Exit code 0 on success.
//
//   TURNLOC_SERVICE_URL=http://127.0.0.1:8080 node dist/scripts/session_check.js \
//       "<locator 1>" "<observer 1>" "<locator 2>" "<observer 2>"

import { ApiClient } from '../src/api.js'
import { countPeaks } from '../src/heatmap.js'

async function main(): Promise<number> {
  const base = process.env.TURNLOC_SERVICE_URL
  if (!base) {
    console.error('TURNLOC_SERVICE_URL is not set')
    return 2
  }
  const [loc1, obs1, loc2, obs2] = process.argv.slice(2)
  if (!obs2) {
    console.error('need four arguments: locator1 observer1 locator2 observer2')
    return 2
  }
  const api = new ApiClient(base)
  const worlds = await api.listWorlds()
  const demo = worlds.worlds.find((w) => w.rooms.filter((r) => r.label === 'bedroom').length >= 2)
  if (!demo) {
    console.error('no two-bedroom world available on the service')
    return 1
  }
  const session = await api.createSession(demo.worldId)
  console.log(`session ${session.sessionId} on ${demo.worldId}`)

  const first = await api.submitTurn(session.sessionId, loc1, obs1)
  const peaks1 = countPeaks(first.heatmap).length
  console.log(`turn 1: ${peaks1} peaks, top-1 ${first.topK[0].roomLabel}`)

  const second = await api.submitTurn(session.sessionId, loc2, obs2)
  const peaks2 = countPeaks(second.heatmap).length
  console.log(`turn 2: ${peaks2} peaks, top-1 ${second.topK[0].roomLabel}`)

  // the console renders exactly the API payload; verify against a re-read
  const history = await api.getSession(session.sessionId)
  const shown = history.history[1].response.topK[0].roomLabel
  if (shown !== second.topK[0].roomLabel) {
    console.error(`label mismatch: displayed ${shown} vs payload ${second.topK[0].roomLabel}`)
    return 1
  }
  await api.closeSession(session.sessionId)

  if (peaks1 < 2) {
    console.error(`expected >=2 peaks after the ambiguous first turn, got ${peaks1}`)
    return 1
  }
  if (peaks2 !== 1) {
    console.error(`expected exactly 1 peak after the disambiguating turn, got ${peaks2}`)
    return 1
  }
  console.log('session check passed')
  return 0
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(err)
    process.exit(1)
  },
)
