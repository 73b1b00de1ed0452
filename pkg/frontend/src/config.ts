/** Base URLs for the capability services; override per deployment. */

export interface ServiceUrls {
  reception: string;
  workflow: string;
  methodology: string;
  registry: string;
  broker: string;
}

const DEFAULT_HOST = "http://127.0.0.1";
const BASE_PORT = 8040;

export function defaultUrls(host = DEFAULT_HOST, basePort = BASE_PORT): ServiceUrls {
  return {
    reception: `${host}:${basePort}`,
    workflow: `${host}:${basePort + 1}`,
    methodology: `${host}:${basePort + 3}`,
    registry: `${host}:${basePort + 4}`,
    broker: `${host}:${basePort + 5}`,
  };
}

let urls: ServiceUrls = defaultUrls();

export function configureUrls(next: Partial<ServiceUrls>): void {
  urls = { ...urls, ...next };
}

export function serviceUrls(): ServiceUrls {
  return urls;
}
